//! Semantic consistency toolkit for generative language-model outputs.
//!
//! The crate measures how consistently a model answers paraphrased or
//! re-sampled versions of the same question, and implements Ask-to-Choose
//! (A2C), a multiple-choice re-prompting step that picks one answer among the
//! model's own candidates.
//!
//! Layout:
//!
//! * [`metrics`]: lexical and semantic consistency, clustering entropy,
//!   ROUGE-1, entity overlap, conditional consistency.
//! * [`agreement`]: pairwise agreement oracles and equivalence matrices.
//! * [`generation`]: paraphrase and cross-temperature answer variations.
//! * [`a2c`]: the Ask-to-Choose selection loop.
//! * [`analysis`]: Fleiss' kappa, Spearman correlation, before/after tables.
//! * [`backend`]: completion and scorer clients, caching, retries, mocks.
//! * [`pipeline`]: dataset ingestion, run orchestration and persistence.

pub mod a2c;
pub mod agreement;
pub mod analysis;
pub mod backend;
pub mod generation;
pub mod metrics;
pub mod pipeline;
pub mod prompts;
pub mod text;

pub use metrics::{AnswerRecord, AnswerSet, ClusterPartition, EquivalenceMatrix, Provenance};
