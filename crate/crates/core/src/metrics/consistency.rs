use serde::{Deserialize, Serialize};

use super::{AnswerSet, EquivalenceMatrix, MetricsError};
use crate::text::normalize_answer;

/// Fraction of ordered answer pairs that are equal after normalization.
pub fn cons_lex(answers: &AnswerSet) -> Result<f64, MetricsError> {
    let n = answers.len();
    if n < 2 {
        return Err(MetricsError::SingletonSet { n });
    }
    let normalized: Vec<String> = answers
        .answers()
        .iter()
        .map(|a| normalize_answer(&a.text))
        .collect();
    let mut equal = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i != j && normalized[i] == normalized[j] {
                equal += 1;
            }
        }
    }
    Ok(equal as f64 / (n * (n - 1)) as f64)
}

/// Mean of the n(n-1) off-diagonal agreement scores.
///
/// This equals the mean over answers of [`per_answer_agreement`], but is
/// summed in a single pass so that 0/1 matrices give exactly the same value
/// as [`cons_lex`].
pub fn cons_pairwise(m: &EquivalenceMatrix) -> Result<f64, MetricsError> {
    let n = m.n();
    if n < 2 {
        return Err(MetricsError::SingletonSet { n });
    }
    let mut total = 0.0;
    for (i, row) in m.rows().iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            if i != j {
                total += v;
            }
        }
    }
    Ok(total / (n * (n - 1)) as f64)
}

/// Agreement of each answer with the rest of the set:
/// `S(y_i, Y_-i) = (1/(n-1)) * sum_{j != i} s(y_i, y_j)`.
pub fn per_answer_agreement(m: &EquivalenceMatrix) -> Result<Vec<f64>, MetricsError> {
    let n = m.n();
    if n < 2 {
        return Err(MetricsError::SingletonSet { n });
    }
    Ok(m.rows()
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, v)| v)
                .sum::<f64>()
                / (n - 1) as f64
        })
        .collect())
}

/// Result of a consistency computation restricted to accurate answers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditional {
    Value(f64),
    /// Fewer than two answers reached the accuracy cutoff.
    Undefined,
}

impl Conditional {
    pub fn value(self) -> Option<f64> {
        match self {
            Conditional::Value(v) => Some(v),
            Conditional::Undefined => None,
        }
    }
}

/// Pairwise consistency over the answers whose accuracy is at least `cutoff`.
pub fn conditional_consistency(
    answers: &AnswerSet,
    m: &EquivalenceMatrix,
    accuracy: &[f64],
    cutoff: f64,
) -> Result<Conditional, MetricsError> {
    if accuracy.len() != answers.len() || m.n() != answers.len() {
        return Err(MetricsError::LengthMismatch {
            expected: answers.len(),
            got: if accuracy.len() != answers.len() { accuracy.len() } else { m.n() },
        });
    }
    let kept: Vec<usize> = accuracy
        .iter()
        .enumerate()
        .filter(|(_, &a)| a >= cutoff)
        .map(|(i, _)| i)
        .collect();
    if kept.len() < 2 {
        return Ok(Conditional::Undefined);
    }
    cons_pairwise(&m.restrict(&kept)).map(Conditional::Value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{Provenance, Symmetrization};
    use crate::text::normalize_answer;
    use proptest::prelude::*;

    fn set(texts: &[&str]) -> AnswerSet {
        AnswerSet::from_texts(texts, Provenance::Temperature { value: 0.5 }).unwrap()
    }

    fn exact_matrix(answers: &AnswerSet) -> EquivalenceMatrix {
        let t = answers.texts();
        EquivalenceMatrix::from_fn("exact", Symmetrization::Mean, t.len(), |i, j| {
            (normalize_answer(t[i]) == normalize_answer(t[j])) as u8 as f64
        })
        .unwrap()
    }

    // Brute force over the 12 ordered pairs of {a, a, b, b}: (0,1), (1,0),
    // (2,3), (3,2) agree, so 4/12.
    const TWO_PAIRS: f64 = 4.0 / 12.0;

    #[test]
    fn lexical_examples() {
        assert_eq!(cons_lex(&set(&["Georgia.", "Georgia.", "Georgia."])).unwrap(), 1.0);
        assert_eq!(cons_lex(&set(&["a", "b", "c"])).unwrap(), 0.0);
        assert_eq!(cons_lex(&set(&["a", "a", "b", "b"])).unwrap(), TWO_PAIRS);
        assert_eq!(
            cons_lex(&set(&["a"])),
            Err(MetricsError::SingletonSet { n: 1 })
        );
    }

    #[test]
    fn pairwise_examples() {
        let same = set(&["x", "x", "x"]);
        assert_eq!(cons_pairwise(&exact_matrix(&same)).unwrap(), 1.0);
        let zero = EquivalenceMatrix::from_fn("z", Symmetrization::Mean, 4, |_, _| 0.0).unwrap();
        assert_eq!(cons_pairwise(&zero).unwrap(), 0.0);
        let abab = set(&["a", "a", "b", "b"]);
        assert_eq!(cons_pairwise(&exact_matrix(&abab)).unwrap(), TWO_PAIRS);
        let one = EquivalenceMatrix::from_fn("z", Symmetrization::Mean, 1, |_, _| 0.0).unwrap();
        assert_eq!(cons_pairwise(&one), Err(MetricsError::SingletonSet { n: 1 }));
    }

    #[test]
    fn mean_of_per_answer_agreement_matches() {
        let m = EquivalenceMatrix::from_fn("p", Symmetrization::Mean, 4, |i, j| {
            ((i + j) as f64 / 10.0).min(1.0)
        })
        .unwrap();
        let per = per_answer_agreement(&m).unwrap();
        let mean = per.iter().sum::<f64>() / per.len() as f64;
        assert!((mean - cons_pairwise(&m).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn conditional_examples() {
        let answers = set(&["a", "b", "a", "c"]);
        let m = exact_matrix(&answers);
        let acc = [0.9, 0.1, 0.8, 0.0];
        assert_eq!(
            conditional_consistency(&answers, &m, &acc, 0.0).unwrap(),
            Conditional::Value(cons_pairwise(&m).unwrap())
        );
        assert_eq!(
            conditional_consistency(&answers, &m, &acc, 0.95).unwrap(),
            Conditional::Undefined
        );
        // Answers 0 and 2 survive; their 2x2 submatrix is all ones.
        assert_eq!(
            conditional_consistency(&answers, &m, &acc, 0.3).unwrap(),
            Conditional::Value(1.0)
        );
        assert!(conditional_consistency(&answers, &m, &acc[..3], 0.3).is_err());
    }

    proptest! {
        #[test]
        fn exact_oracle_recovers_lexical(texts in prop::collection::vec("[abc]", 2..=6)) {
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            let answers = set(&refs);
            prop_assert_eq!(cons_pairwise(&exact_matrix(&answers)).unwrap(), cons_lex(&answers).unwrap());
        }

        #[test]
        fn pairwise_is_monotone(
            base in prop::collection::vec(0.0f64..=1.0, 15),
            bump in prop::collection::vec(0.0f64..=1.0, 15),
        ) {
            let idx = |i: usize, j: usize| {
                let (a, b) = if i < j { (i, j) } else { (j, i) };
                a * 6 + b - (a + 1) * (a + 2) / 2
            };
            let lo = EquivalenceMatrix::from_fn("lo", Symmetrization::Mean, 6, |i, j| base[idx(i, j)]).unwrap();
            let hi = EquivalenceMatrix::from_fn("hi", Symmetrization::Mean, 6, |i, j| {
                let k = idx(i, j);
                (base[k] + bump[k] * (1.0 - base[k])).min(1.0)
            }).unwrap();
            prop_assert!(cons_pairwise(&hi).unwrap() >= cons_pairwise(&lo).unwrap());
        }
    }
}
