//! Few-shot prompt templates, rendered byte-for-byte.
//!
//! The template bodies live in the neighbouring `.txt` files and are
//! compiled in with `include_str!`. Trailing spaces inside them are part of
//! the template and must not be trimmed.

/// Few-shot paraphrasing instructions with four numbered techniques.
pub const PARAPHRASE_TEMPLATE: &str = include_str!("paraphrase.txt");
/// Context/question/short-answer exemplars.
pub const ANSWER_TEMPLATE: &str = include_str!("answer.txt");
/// Pairwise "same answer?" exemplars for the judge model.
pub const SIMILAR_TEMPLATE: &str = include_str!("similar.txt");

pub const RANK_INSTRUCTION: &str = "For the question above there are several options given, choose one among them which seems to be the most correct.";
pub const DONT_KNOW_OPTION: &str = "Don't know the correct answer";

/// Substitutes `{name}` placeholders in a single left-to-right pass, so
/// braces inside substituted values are never re-expanded. Unknown
/// placeholders are left as they are.
pub fn render(template: &str, values: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) => {
                let name = &after[..close];
                match values.iter().find(|(k, _)| *k == name) {
                    Some((_, v)) => out.push_str(v),
                    None => {
                        out.push('{');
                        out.push_str(name);
                        out.push('}');
                    }
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push_str(&rest[open..]);
                rest = "";
            }
        }
    }
    out.push_str(rest);
    out
}

pub fn paraphrase_prompt(technique: u8, sentence: &str) -> String {
    render(
        PARAPHRASE_TEMPLATE,
        &[("method", &technique.to_string()), ("sentence", sentence)],
    )
}

pub fn answer_prompt(context: &str, question: &str) -> String {
    render(ANSWER_TEMPLATE, &[("context", context), ("question", question)])
}

pub fn similar_prompt(question: &str, answer1: &str, answer2: &str) -> String {
    render(
        SIMILAR_TEMPLATE,
        &[("question", question), ("answer1", answer1), ("answer2", answer2)],
    )
}

/// Multiple-choice ranking prompt: one numbered line per option, followed by
/// the "Don't know" option and a trailing `Answer:`.
pub fn rank_prompt<S: AsRef<str>>(question: &str, options: &[S]) -> String {
    let mut out = format!("Question: {question}\n{RANK_INSTRUCTION}\n");
    for (i, option) in options.iter().enumerate() {
        out.push_str(&format!("Option {}: {}\n", i + 1, option.as_ref()));
    }
    out.push_str(&format!("Option {}: {DONT_KNOW_OPTION}\nAnswer:", options.len() + 1));
    out
}
