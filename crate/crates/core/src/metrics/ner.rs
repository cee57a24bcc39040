use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{EquivalenceMatrix, MetricsError, Symmetrization};
use crate::backend::ScorerError;

/// Something that pulls named-entity strings out of a text.
pub trait EntityExtractor: Send + Sync {
    fn extract(&self, text: &str) -> Result<Vec<String>, ScorerError>;
}

/// Capitalized-run heuristic: consecutive capitalized words form one
/// entity, except common function words in sentence-initial position.
#[derive(Debug, Default, Clone, Copy)]
pub struct HeuristicEntityExtractor;

const SENTENCE_STARTERS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "because", "but", "by", "can", "do", "does", "for",
    "he", "her", "his", "how", "i", "if", "in", "is", "it", "its", "many", "most", "my", "no",
    "none", "not", "nothing", "of", "on", "one", "or", "she", "some", "that", "the", "their",
    "there", "these", "they", "this", "those", "to", "virtually", "we", "what", "when",
    "where", "which", "who", "why", "yes", "you", "your",
];

impl EntityExtractor for HeuristicEntityExtractor {
    fn extract(&self, text: &str) -> Result<Vec<String>, ScorerError> {
        let mut entities = Vec::new();
        let mut current: Vec<&str> = Vec::new();
        let mut sentence_start = true;
        for raw in text.split_whitespace() {
            let word = raw.trim_matches(|c: char| !c.is_alphanumeric());
            let capitalized = word.chars().next().is_some_and(char::is_uppercase);
            let starter = sentence_start && SENTENCE_STARTERS.contains(&word.to_lowercase().as_str());
            if capitalized && !starter {
                current.push(word);
            } else if !current.is_empty() {
                entities.push(current.join(" "));
                current.clear();
            }
            // Punctuation after a word also ends an entity.
            let ends_word = raw.ends_with(|c: char| !c.is_alphanumeric());
            if ends_word && !current.is_empty() {
                entities.push(current.join(" "));
                current.clear();
            }
            sentence_start = raw.ends_with(['.', '!', '?']);
        }
        if !current.is_empty() {
            entities.push(current.join(" "));
        }
        Ok(entities)
    }
}

/// Set overlap with a marker for the vacuous both-empty case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub value: f64,
    pub vacuous: bool,
}

/// Jaccard similarity of casefolded entity sets; two empty sets agree
/// vacuously with value 1.0.
pub fn jaccard_overlap<S: AsRef<str>>(a: &[S], b: &[S]) -> Overlap {
    let fold = |v: &[S]| -> BTreeSet<String> {
        v.iter()
            .map(|s| s.as_ref().trim().to_lowercase())
            .filter(|s| !s.is_empty())
            .collect()
    };
    let (sa, sb) = (fold(a), fold(b));
    if sa.is_empty() && sb.is_empty() {
        return Overlap {
            value: 1.0,
            vacuous: true,
        };
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.union(&sb).count();
    Overlap {
        value: inter as f64 / union as f64,
        vacuous: false,
    }
}

pub fn ner_overlap(
    a: &str,
    b: &str,
    entities: &dyn EntityExtractor,
) -> Result<Overlap, ScorerError> {
    Ok(jaccard_overlap(&entities.extract(a)?, &entities.extract(b)?))
}

/// Pairwise entity-overlap matrix plus the number of vacuous unordered pairs.
pub fn entity_matrix(entities: &[Vec<String>]) -> Result<(EquivalenceMatrix, usize), MetricsError> {
    let n = entities.len();
    let mut vacuous = 0;
    for i in 0..n {
        for j in i + 1..n {
            vacuous += jaccard_overlap(&entities[i], &entities[j]).vacuous as usize;
        }
    }
    let m = EquivalenceMatrix::from_fn("ner", Symmetrization::Mean, n, |i, j| {
        jaccard_overlap(&entities[i], &entities[j]).value
    })?;
    Ok((m, vacuous))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn extract(text: &str) -> Vec<String> {
        HeuristicEntityExtractor.extract(text).unwrap()
    }

    #[test]
    fn heuristic_extraction() {
        assert_eq!(extract("Georgia grows peaches"), vec!["Georgia"]);
        assert_eq!(extract("Georgia leads production"), vec!["Georgia"]);
        assert!(extract("no entities here").is_empty());
        assert!(extract("Nothing; they are safe to eat.").is_empty());
        assert_eq!(
            extract("A penny dropped from the Empire State Building hits New York."),
            vec!["Empire State Building", "New York"]
        );
        assert_eq!(extract("It is Paris, not London"), vec!["Paris", "London"]);
    }

    #[test]
    fn overlap_examples() {
        let h = HeuristicEntityExtractor;
        let o = ner_overlap("Georgia grows peaches", "Georgia leads production", &h).unwrap();
        assert_eq!(o, Overlap { value: 1.0, vacuous: false });
        let o = ner_overlap("no entities here", "none here either", &h).unwrap();
        assert_eq!(o, Overlap { value: 1.0, vacuous: true });
        let o = ner_overlap("Paris is big", "London is big", &h).unwrap();
        assert_eq!(o.value, 0.0);
    }

    #[test]
    fn jaccard_casefolds() {
        let o = jaccard_overlap(&["Paris", "London"], &["paris", "Rome"]);
        assert!((o.value - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matrix_counts_vacuous_pairs() {
        let ents = vec![vec![], vec![], vec!["Georgia".to_string()]];
        let (m, vacuous) = entity_matrix(&ents).unwrap();
        assert_eq!(vacuous, 1);
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(0, 2), 0.0);
    }
}
