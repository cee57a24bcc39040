//! Text normalization shared by the lexical metrics and the exact-match oracle.

/// Normalizes an answer for lexical equality: trims, casefolds, collapses
/// internal whitespace and strips terminal punctuation.
///
/// `"  Georgia. "` and `"georgia"` normalize to the same string.
pub fn normalize_answer(text: &str) -> String {
    let collapsed = text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase();
    collapsed
        .trim_end_matches(|c: char| c.is_whitespace() || is_punctuation(c))
        .to_string()
}

/// Lowercases, replaces every non-alphanumeric character with a space and
/// splits on whitespace.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .map(str::to_string)
        .collect()
}

/// Returns true when `needle` occurs as a contiguous token run inside
/// `haystack`. An empty needle never matches.
pub fn contains_token_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && haystack.len() >= needle.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

/// First non-empty line of a completion, trimmed.
pub fn first_line(text: &str) -> &str {
    text.lines()
        .map(str::trim)
        .find(|l| !l.is_empty())
        .unwrap_or("")
}

fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '\u{2018}' | '\u{2019}' | '\u{201C}' | '\u{201D}' | '\u{2026}' | '\u{3002}' | '\u{FF01}' | '\u{FF1F}'
        )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_casefolds_and_strips_terminal_punctuation() {
        assert_eq!(normalize_answer("Georgia."), "georgia");
        assert_eq!(normalize_answer("  Nothing;  they are   safe. "), "nothing; they are safe");
        assert_eq!(normalize_answer("165 mph!?"), "165 mph");
        assert_eq!(normalize_answer("..."), "");
    }

    #[test]
    fn tokenizer_splits_on_punctuation() {
        assert_eq!(tokenize("24-72 hours."), vec!["24", "72", "hours"]);
        assert_eq!(tokenize("Georgia."), vec!["georgia"]);
        assert!(tokenize(" ,; ").is_empty());
    }

    #[test]
    fn token_runs() {
        let hay = tokenize("Option 3: the hottest section is the placenta");
        assert!(contains_token_run(&hay, &tokenize("The placenta")));
        assert!(!contains_token_run(&hay, &tokenize("placenta the")));
        assert!(!contains_token_run(&hay, &[]));
    }

    #[test]
    fn first_line_skips_blank_lines() {
        assert_eq!(first_line("\n  Georgia.\nContext: x"), "Georgia.");
        assert_eq!(first_line(""), "");
    }
}
