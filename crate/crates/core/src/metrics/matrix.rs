use serde::{Deserialize, Serialize};

use super::MetricsError;

/// How the two directed scores s(a, b) and s(b, a) are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetrization {
    Min,
    Max,
    #[default]
    Mean,
    /// Keep both directions; the matrix may be asymmetric.
    Directed,
}

impl Symmetrization {
    pub fn combine(self, forward: f64, backward: f64) -> f64 {
        match self {
            Symmetrization::Min => forward.min(backward),
            Symmetrization::Max => forward.max(backward),
            Symmetrization::Mean => (forward + backward) / 2.0,
            Symmetrization::Directed => forward,
        }
    }
}

/// n x n pairwise agreement scores from one oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceMatrix {
    n: usize,
    scores: Vec<Vec<f64>>,
    pub oracle_id: String,
    pub symmetrization: Symmetrization,
}

impl EquivalenceMatrix {
    /// Validates and wraps a score table. The diagonal is forced to 1.0.
    pub fn new(
        oracle_id: impl Into<String>,
        symmetrization: Symmetrization,
        mut scores: Vec<Vec<f64>>,
    ) -> Result<Self, MetricsError> {
        let n = scores.len();
        for (i, row) in scores.iter_mut().enumerate() {
            if row.len() != n {
                return Err(MetricsError::InvalidMatrix(format!(
                    "row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            row[i] = 1.0;
        }
        let m = Self {
            n,
            scores,
            oracle_id: oracle_id.into(),
            symmetrization,
        };
        m.validate()?;
        Ok(m)
    }

    /// Builds a matrix by evaluating `f(i, j)` for every off-diagonal cell.
    pub fn from_fn(
        oracle_id: impl Into<String>,
        symmetrization: Symmetrization,
        n: usize,
        mut f: impl FnMut(usize, usize) -> f64,
    ) -> Result<Self, MetricsError> {
        let scores = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { f(i, j) }).collect())
            .collect();
        Self::new(oracle_id, symmetrization, scores)
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        for i in 0..self.n {
            if self.scores[i][i] != 1.0 {
                return Err(MetricsError::InvalidMatrix(format!("diagonal {i} is not 1.0")));
            }
            for j in 0..self.n {
                let v = self.scores[i][j];
                if !(0.0..=1.0).contains(&v) {
                    return Err(MetricsError::InvalidMatrix(format!(
                        "entry ({i},{j}) = {v} outside [0,1]"
                    )));
                }
                if self.symmetrization != Symmetrization::Directed && v != self.scores[j][i] {
                    return Err(MetricsError::InvalidMatrix(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.scores[i][j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.scores
    }

    /// The principal submatrix on `indices`, in the given order.
    pub fn restrict(&self, indices: &[usize]) -> Self {
        Self {
            n: indices.len(),
            scores: indices
                .iter()
                .map(|&i| indices.iter().map(|&j| self.scores[i][j]).collect())
                .collect(),
            oracle_id: self.oracle_id.clone(),
            symmetrization: self.symmetrization,
        }
    }

    /// Maps every off-diagonal score to 1.0 if it reaches `threshold`, else 0.0.
    pub fn binarized(&self, threshold: f64) -> Self {
        let mut out = self.clone();
        for (i, row) in out.scores.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                if i != j {
                    *v = if *v >= threshold { 1.0 } else { 0.0 };
                }
            }
        }
        out
    }
}
