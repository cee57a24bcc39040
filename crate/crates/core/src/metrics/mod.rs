//! Consistency and accuracy metrics.
//!
//! Every function here is pure: inputs are borrowed immutably and nothing is
//! cached, so the metrics can be evaluated from any number of worker threads.

mod answers;
mod cluster;
mod consistency;
mod entropy;
mod matrix;
mod ner;
mod report;
mod rouge;

pub use answers::{AnswerRecord, AnswerSet, Provenance};
pub use cluster::{cluster_answers, ClusterPartition};
pub use consistency::{
    conditional_consistency, cons_lex, cons_pairwise, per_answer_agreement, Conditional,
};
pub use entropy::semantic_entropy;
pub use matrix::{EquivalenceMatrix, Symmetrization};
pub use ner::{
    entity_matrix, jaccard_overlap, ner_overlap, EntityExtractor, HeuristicEntityExtractor,
    Overlap,
};
pub use report::{Metric, MetricReport};
pub use rouge::{max_rouge1, rouge1, rouge1_matrix, RougeScore};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("consistency needs at least 2 answers, got {n}")]
    SingletonSet { n: usize },
    #[error("answer text is empty after trimming")]
    EmptyAnswer,
    #[error("invalid equivalence matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid cluster partition: {0}")]
    InvalidPartition(String),
    #[error("clustering threshold must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}
