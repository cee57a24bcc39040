//! Per-question run records and the metric pass over their stored raw data.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::a2c::SelectionCounts;
use crate::agreement::{MatrixBuild, OracleKind};
use crate::backend::Transcript;
use crate::generation::{Paraphrase, SlotFailure};
use crate::metrics::{
    cluster_answers, cons_lex, cons_pairwise, conditional_consistency, entity_matrix, max_rouge1, rouge1_matrix,
    semantic_entropy, AnswerSet, ClusterPartition, EquivalenceMatrix, MetricReport, MetricsError,
    Symmetrization,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Context,
    Temperature,
    A2cContext,
    A2cTemperature,
}

impl Branch {
    pub const ALL: [Branch; 4] = [Branch::Context, Branch::Temperature, Branch::A2cContext, Branch::A2cTemperature];

    pub fn name(self) -> &'static str {
        match self {
            Branch::Context => "context",
            Branch::Temperature => "temperature",
            Branch::A2cContext => "a2c_context",
            Branch::A2cTemperature => "a2c_temperature",
        }
    }

    pub fn from_name(name: &str) -> Option<Branch> {
        Branch::ALL.into_iter().find(|b| b.name() == name)
    }

    /// The pre-selection branch an A2C branch was derived from.
    pub fn before(self) -> Option<Branch> {
        match self {
            Branch::A2cContext => Some(Branch::Context),
            Branch::A2cTemperature => Some(Branch::Temperature),
            _ => None,
        }
    }
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings of the metric pass. Stored in the summary so an offline
/// recompute uses exactly the same choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSettings {
    pub symmetrization: Symmetrization,
    pub cluster_on: OracleKind,
    pub cluster_threshold: Option<f64>,
    pub binarize: bool,
    pub accuracy_cutoff: f64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            symmetrization: Symmetrization::Mean,
            cluster_on: OracleKind::Paraphrase,
            cluster_threshold: None,
            binarize: false,
            accuracy_cutoff: 0.3,
        }
    }
}

impl MetricSettings {
    fn threshold_for(&self, kind: OracleKind) -> f64 {
        match self.cluster_threshold {
            Some(t) if kind == self.cluster_on => t,
            _ => kind.default_cluster_threshold(),
        }
    }
}

/// Everything produced for one answer set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchRecord {
    pub branch: Branch,
    pub answers: AnswerSet,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paraphrases: Vec<Paraphrase>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<SlotFailure>,
    #[serde(default)]
    pub empty_answers: usize,
    pub matrices: Vec<MatrixBuild>,
    /// Entities per answer; absent when NER is off or extraction failed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entities: Option<Vec<Vec<String>>>,
    /// Per-answer BLEURT against the best-matching reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bleurt: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_counts: Option<SelectionCounts>,
    pub partition: ClusterPartition,
    pub report: MetricReport,
}

impl BranchRecord {
    pub fn matrix(&self, kind: OracleKind) -> Option<&MatrixBuild> {
        self.matrices.iter().find(|m| m.kind == kind)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Failed,
}

/// One line of `records.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub question_id: String,
    pub question: String,
    pub best_answer: String,
    pub correct_answers: Vec<String>,
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub branches: Vec<BranchRecord>,
    /// Logical calls per role during answer generation and scoring.
    pub calls: BTreeMap<String, usize>,
    /// Logical calls per role made by Ask-to-Choose.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a2c_calls: Option<BTreeMap<String, usize>>,
    pub transcript: Transcript,
}

impl RunRecord {
    pub fn branch(&self, b: Branch) -> Option<&BranchRecord> {
        self.branches.iter().find(|r| r.branch == b)
    }

    pub fn references(&self) -> Vec<String> {
        reference_answers(&self.best_answer, &self.correct_answers)
    }
}

/// Accuracy references: the correct answers, plus the best answer when it
/// is not among them.
pub fn reference_answers(best: &str, correct: &[String]) -> Vec<String> {
    let mut refs = correct.to_vec();
    if !refs.iter().any(|r| r.trim() == best.trim()) {
        refs.insert(0, best.to_string());
    }
    refs
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Metric pass over stored raw data: directed oracle scores, entities,
/// BLEURT scores and the answers themselves. Needs no backend.
#[allow(clippy::too_many_arguments)]
pub fn compute_metrics(
    question_id: &str,
    answers: &AnswerSet,
    matrices: &[MatrixBuild],
    entities: Option<&[Vec<String>]>,
    bleurt: Option<&[f64]>,
    empty_answers: usize,
    references: &[String],
    settings: &MetricSettings,
) -> Result<(MetricReport, ClusterPartition), MetricsError> {
    let n = answers.len();
    let mut report = MetricReport {
        question_id: question_id.to_string(),
        n,
        ..Default::default()
    };
    report.exclusions.empty_answers = empty_answers;
    report.cons_lex = Some(cons_lex(answers)?);

    let mut rebuilt: BTreeMap<&'static str, EquivalenceMatrix> = BTreeMap::new();
    let mut kinds = Vec::new();
    for build in matrices {
        let m = MatrixBuild::reassemble(build.kind, n, &build.pairs, settings.symmetrization)?;
        report.exclusions.failed_pairs += build.failed_pairs();
        report.exclusions.unparseable_judgments += build.unparseable();
        let scored = if settings.binarize {
            m.binarized(settings.threshold_for(build.kind))
        } else {
            m.clone()
        };
        let value = Some(cons_pairwise(&scored)?);
        match build.kind {
            OracleKind::Paraphrase => report.cons_pp = value,
            OracleKind::NliEntail => report.cons_entail = value,
            OracleKind::NliContra => report.cons_contra = value,
            OracleKind::LlmJudge => report.cons_judge = value,
            OracleKind::ExactMatch => {}
        }
        rebuilt.insert(build.kind.name(), m);
        kinds.push(build.kind);
    }

    // Cluster on the configured oracle, falling back to the strongest one
    // available.
    let order = [
        settings.cluster_on,
        OracleKind::Paraphrase,
        OracleKind::LlmJudge,
        OracleKind::NliEntail,
        OracleKind::ExactMatch,
    ];
    let cluster_kind = order.into_iter().find(|k| kinds.contains(k) && *k != OracleKind::NliContra);
    let (cluster_matrix, threshold) = match cluster_kind {
        Some(k) => (rebuilt[k.name()].clone(), settings.threshold_for(k)),
        None => (
            EquivalenceMatrix::from_fn("exact", Symmetrization::Mean, n, |i, j| {
                crate::agreement::score_exact(answers.texts()[i], answers.texts()[j])
            })?,
            1.0,
        ),
    };
    let partition = cluster_answers(&cluster_matrix, threshold)?;
    report.entropy = Some(semantic_entropy(&partition));

    report.r1_c = Some(cons_pairwise(&rouge1_matrix(answers)?)?);

    if let Some(entities) = entities {
        if entities.len() != n {
            return Err(MetricsError::LengthMismatch {
                expected: n,
                got: entities.len(),
            });
        }
        let (m, vacuous) = entity_matrix(entities)?;
        report.ner_overlap = Some(cons_pairwise(&m)?);
        report.exclusions.vacuous_ner_pairs = vacuous;
    }

    let accuracy: Vec<f64> = answers.texts().iter().map(|a| max_rouge1(a, references)).collect();
    report.r1_a = Some(mean(&accuracy));

    if let Some(scores) = bleurt {
        if scores.len() != n {
            return Err(MetricsError::LengthMismatch {
                expected: n,
                got: scores.len(),
            });
        }
        report.bleurt = Some(mean(scores));
    }

    let conditional = conditional_consistency(answers, &cluster_matrix, &accuracy, settings.accuracy_cutoff)?;
    report.pp_given_acc = conditional.value();
    report.exclusions.conditional_undefined = report.pp_given_acc.is_none();
    Ok((report, partition))
}

impl BranchRecord {
    /// Recomputes this branch's report and partition from its raw data.
    pub fn recompute(
        &self,
        question_id: &str,
        references: &[String],
        settings: &MetricSettings,
    ) -> Result<(MetricReport, ClusterPartition), MetricsError> {
        compute_metrics(
            question_id,
            &self.answers,
            &self.matrices,
            self.entities.as_deref(),
            self.bleurt.as_deref(),
            self.empty_answers,
            references,
            settings,
        )
    }
}
