use std::collections::HashMap;

use super::{AnswerSet, EquivalenceMatrix, MetricsError, Symmetrization};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RougeScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl RougeScore {
    const ZERO: RougeScore = RougeScore {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
    };

    /// Unigram precision, recall and F1 of `candidate` against `reference`,
    /// with clipped multiset counts.
    pub fn compute(candidate: &str, reference: &str) -> Self {
        let cand = tokenize(candidate);
        let refs = tokenize(reference);
        if cand.is_empty() || refs.is_empty() {
            return Self::ZERO;
        }
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for t in &refs {
            *counts.entry(t.as_str()).or_default() += 1;
        }
        let mut overlap = 0usize;
        for t in &cand {
            if let Some(c) = counts.get_mut(t.as_str()) {
                if *c > 0 {
                    *c -= 1;
                    overlap += 1;
                }
            }
        }
        if overlap == 0 {
            return Self::ZERO;
        }
        let precision = overlap as f64 / cand.len() as f64;
        let recall = overlap as f64 / refs.len() as f64;
        // 2PR/(P+R) written over integer counts keeps F1 exactly symmetric.
        let f1 = 2.0 * overlap as f64 / (cand.len() + refs.len()) as f64;
        Self {
            precision,
            recall,
            f1,
        }
    }
}

/// ROUGE-1 F1. Empty token lists on either side score 0.
pub fn rouge1(candidate: &str, reference: &str) -> f64 {
    RougeScore::compute(candidate, reference).f1
}

/// Best ROUGE-1 F1 against any of the references; 0 with no references.
pub fn max_rouge1<S: AsRef<str>>(candidate: &str, references: &[S]) -> f64 {
    references
        .iter()
        .map(|r| rouge1(candidate, r.as_ref()))
        .fold(0.0, f64::max)
}

/// Pairwise ROUGE-1 matrix used for the R1-C consistency column.
pub fn rouge1_matrix(answers: &AnswerSet) -> Result<EquivalenceMatrix, MetricsError> {
    let texts = answers.texts();
    EquivalenceMatrix::from_fn("rouge1", Symmetrization::Mean, texts.len(), |i, j| {
        rouge1(texts[i], texts[j])
    })
}
