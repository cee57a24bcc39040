//! Pairwise semantic-equivalence oracles and matrix construction.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backend::{
    BackendError, CompletionBackend, CompletionRequest, NliLabel, ScoreRequest, ScoreTask, Scorer, ScorerError,
};
use crate::metrics::{AnswerSet, EntityExtractor, EquivalenceMatrix, MetricsError, Symmetrization};
use crate::prompts;
use crate::text::normalize_answer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    #[serde(alias = "exact")]
    ExactMatch,
    #[serde(alias = "pp")]
    Paraphrase,
    #[serde(alias = "entail")]
    NliEntail,
    #[serde(alias = "contra")]
    NliContra,
    #[serde(alias = "judge")]
    LlmJudge,
}

impl OracleKind {
    /// Symmetric oracles are queried once per unordered pair.
    pub fn symmetric(self) -> bool {
        matches!(self, OracleKind::ExactMatch | OracleKind::Paraphrase)
    }

    pub fn name(self) -> &'static str {
        match self {
            OracleKind::ExactMatch => "exact",
            OracleKind::Paraphrase => "pp",
            OracleKind::NliEntail => "entail",
            OracleKind::NliContra => "contra",
            OracleKind::LlmJudge => "judge",
        }
    }

    /// Edge threshold used when clustering on this oracle's scores.
    pub fn default_cluster_threshold(self) -> f64 {
        match self {
            OracleKind::Paraphrase => 0.8,
            _ => 0.5,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum OracleError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Yes,
    No,
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub raw_text: String,
    pub verdict: Verdict,
}

impl JudgeVerdict {
    /// Reads the leading word of the completion, ignoring case and
    /// surrounding punctuation.
    pub fn parse(raw_text: &str) -> Self {
        let word: String = raw_text
            .trim_start_matches(|c: char| !c.is_alphanumeric())
            .chars()
            .take_while(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        let verdict = match word.as_str() {
            "yes" => Verdict::Yes,
            "no" => Verdict::No,
            _ => Verdict::Unparseable,
        };
        Self {
            raw_text: raw_text.to_string(),
            verdict,
        }
    }

    pub fn score(&self) -> f64 {
        if self.verdict == Verdict::Yes {
            1.0
        } else {
            0.0
        }
    }
}

pub fn score_exact(a: &str, b: &str) -> f64 {
    if normalize_answer(a) == normalize_answer(b) {
        1.0
    } else {
        0.0
    }
}

pub fn score_paraphrase(a: &str, b: &str, scorer: &dyn Scorer) -> Result<f64, ScorerError> {
    let resp = scorer.score(&ScoreRequest::pair(ScoreTask::Paraphrase, a, b))?;
    let s = resp
        .score()
        .ok_or_else(|| ScorerError::Malformed("paraphrase response without score".into()))?;
    Ok(s.clamp(0.0, 1.0))
}

/// Directed NLI probability that `premise` entails (or contradicts) `hypothesis`.
pub fn score_nli_directed(
    premise: &str,
    hypothesis: &str,
    scorer: &dyn Scorer,
    label: NliLabel,
) -> Result<f64, ScorerError> {
    let resp = scorer.score(&ScoreRequest::pair(ScoreTask::Nli, premise, hypothesis))?;
    let probs = resp
        .probs()
        .ok_or_else(|| ScorerError::Malformed("nli response without probs".into()))?;
    Ok(probs.get(label).clamp(0.0, 1.0))
}

/// NLI label probability over both directions, combined by `policy`.
pub fn score_nli(
    a: &str,
    b: &str,
    scorer: &dyn Scorer,
    label: NliLabel,
    policy: Symmetrization,
) -> Result<f64, ScorerError> {
    let forward = score_nli_directed(a, b, scorer, label)?;
    let backward = score_nli_directed(b, a, scorer, label)?;
    Ok(policy.combine(forward, backward))
}

pub fn judge_request(question: &str, a: &str, b: &str) -> CompletionRequest {
    CompletionRequest::new(prompts::similar_prompt(question, a, b))
        .temperature(0.0)
        .top_p(1.0)
        .max_tokens(8)
}

pub fn score_llm_judge(
    question: &str,
    a: &str,
    b: &str,
    judge: &dyn CompletionBackend,
) -> Result<JudgeVerdict, BackendError> {
    let completion = judge.complete(&judge_request(question, a, b))?;
    Ok(JudgeVerdict::parse(&completion.text))
}

/// An oracle bound to whatever backend it needs.
#[derive(Clone, Copy)]
pub enum Oracle<'a> {
    ExactMatch,
    Paraphrase(&'a dyn Scorer),
    Nli(&'a dyn Scorer, NliLabel),
    LlmJudge(&'a dyn CompletionBackend),
}

impl Oracle<'_> {
    pub fn kind(&self) -> OracleKind {
        match self {
            Oracle::ExactMatch => OracleKind::ExactMatch,
            Oracle::Paraphrase(_) => OracleKind::Paraphrase,
            Oracle::Nli(_, NliLabel::Entail) => OracleKind::NliEntail,
            Oracle::Nli(_, NliLabel::Contra) => OracleKind::NliContra,
            Oracle::LlmJudge(_) => OracleKind::LlmJudge,
        }
    }

    /// One directed query s(a, b).
    pub fn query(&self, question: &str, a: &str, b: &str) -> Result<DirectedOutcome, OracleError> {
        Ok(match self {
            Oracle::ExactMatch => DirectedOutcome::plain(score_exact(a, b)),
            Oracle::Paraphrase(s) => DirectedOutcome::plain(score_paraphrase(a, b, *s)?),
            Oracle::Nli(s, label) => DirectedOutcome::plain(score_nli_directed(a, b, *s, *label)?),
            Oracle::LlmJudge(j) => {
                let v = score_llm_judge(question, a, b, *j)?;
                DirectedOutcome {
                    score: v.score(),
                    unparseable: v.verdict == Verdict::Unparseable,
                    raw: Some(v.raw_text),
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectedOutcome {
    pub score: f64,
    pub raw: Option<String>,
    pub unparseable: bool,
}

impl DirectedOutcome {
    fn plain(score: f64) -> Self {
        Self {
            score,
            raw: None,
            unparseable: false,
        }
    }
}

/// One directed oracle query made while building a matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub i: usize,
    pub j: usize,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unparseable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// A matrix together with the directed scores it was assembled from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixBuild {
    pub kind: OracleKind,
    pub matrix: EquivalenceMatrix,
    pub pairs: Vec<PairScore>,
    /// Oracle calls actually issued (repeated text pairs are asked once).
    pub calls: usize,
}

impl MatrixBuild {
    pub fn failed_pairs(&self) -> usize {
        self.pairs.iter().filter(|p| p.error.is_some()).count()
    }

    pub fn unparseable(&self) -> usize {
        self.pairs.iter().filter(|p| p.unparseable).count()
    }

    /// Reassembles the matrix from the stored directed scores.
    pub fn reassemble(
        kind: OracleKind,
        n: usize,
        pairs: &[PairScore],
        policy: Symmetrization,
    ) -> Result<EquivalenceMatrix, MetricsError> {
        assemble(kind, n, pairs, policy)
    }
}

fn assemble(
    kind: OracleKind,
    n: usize,
    pairs: &[PairScore],
    policy: Symmetrization,
) -> Result<EquivalenceMatrix, MetricsError> {
    let mut directed = vec![vec![0.0; n]; n];
    for p in pairs {
        if p.i >= n || p.j >= n {
            return Err(MetricsError::InvalidMatrix(format!("pair ({}, {}) out of range for n={n}", p.i, p.j)));
        }
        directed[p.i][p.j] = p.score;
        if kind.symmetric() {
            directed[p.j][p.i] = p.score;
        }
    }
    let policy = if kind.symmetric() { Symmetrization::Mean } else { policy };
    EquivalenceMatrix::from_fn(kind.name(), policy, n, |i, j| {
        policy.combine(directed[i][j], directed[j][i])
    })
}

/// Builds the n x n matrix for `answers` under `oracle`.
///
/// Asymmetric oracles are asked in both directions, symmetric ones once per
/// unordered pair. Queries run in parallel but land in fixed slots, so the
/// result does not depend on completion order. A failed query scores 0.0
/// and is recorded with its error.
pub fn build_matrix(
    answers: &AnswerSet,
    oracle: Oracle<'_>,
    policy: Symmetrization,
) -> Result<MatrixBuild, MetricsError> {
    let n = answers.len();
    if n < 2 {
        return Err(MetricsError::SingletonSet { n });
    }
    let kind = oracle.kind();
    let texts = answers.texts();
    let question = answers.source_question.as_str();

    let slots: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && (!kind.symmetric() || i < j))
        .collect();

    let mut unique: Vec<(&str, &str)> = Vec::new();
    let mut index: HashMap<(&str, &str), usize> = HashMap::new();
    let slot_query: Vec<usize> = slots
        .iter()
        .map(|&(i, j)| {
            let key = (texts[i], texts[j]);
            *index.entry(key).or_insert_with(|| {
                unique.push(key);
                unique.len() - 1
            })
        })
        .collect();

    let outcomes: Vec<Result<DirectedOutcome, String>> = unique
        .par_iter()
        .map(|(a, b)| oracle.query(question, a, b).map_err(|e| e.to_string()))
        .collect();

    let pairs: Vec<PairScore> = slots
        .iter()
        .zip(&slot_query)
        .map(|(&(i, j), &q)| match &outcomes[q] {
            Ok(o) => PairScore {
                i,
                j,
                score: o.score,
                raw: o.raw.clone(),
                unparseable: o.unparseable,
                error: None,
            },
            Err(e) => PairScore {
                i,
                j,
                score: 0.0,
                raw: None,
                unparseable: false,
                error: Some(e.clone()),
            },
        })
        .collect();

    let matrix = assemble(kind, n, &pairs, policy)?;
    Ok(MatrixBuild {
        kind,
        matrix,
        pairs,
        calls: if kind == OracleKind::ExactMatch { 0 } else { unique.len() },
    })
}

/// Entity extraction served by the scorer's `ner` task.
pub struct ScorerEntityExtractor<'a> {
    pub scorer: &'a dyn Scorer,
}

impl EntityExtractor for ScorerEntityExtractor<'_> {
    fn extract(&self, text: &str) -> Result<Vec<String>, ScorerError> {
        let resp = self.scorer.score(&ScoreRequest::ner(text))?;
        resp.entities()
            .map(<[String]>::to_vec)
            .ok_or_else(|| ScorerError::Malformed("ner response without entities".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{CountingBackend, CountingScorer, NliProbs, ScoreResponse, ScriptedBackend, ScriptedScorer};
    use crate::metrics::{AnswerRecord, Provenance};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn set(texts: &[&str]) -> AnswerSet {
        AnswerSet::from_texts(texts, Provenance::Temperature { value: 0.7 }).unwrap()
    }

    #[test]
    fn exact_match() {
        assert_eq!(score_exact("Georgia.", "georgia"), 1.0);
        assert_eq!(score_exact("a", "b"), 0.0);
        assert_eq!(score_exact("24-72 hours.", "As soon as possible."), 0.0);
    }

    #[test]
    fn exact_matrix_needs_no_backend() {
        let b = build_matrix(&set(&["a", "a", "b"]), Oracle::ExactMatch, Symmetrization::Mean).unwrap();
        assert_eq!(b.matrix.rows(), &[vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(b.calls, 0);
        let again = build_matrix(&set(&["a", "a", "b"]), Oracle::ExactMatch, Symmetrization::Mean).unwrap();
        assert_eq!(again, b);
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(JudgeVerdict::parse("Yes").verdict, Verdict::Yes);
        assert_eq!(JudgeVerdict::parse(" yes, both say nothing").verdict, Verdict::Yes);
        assert_eq!(JudgeVerdict::parse("NO.").verdict, Verdict::No);
        assert_eq!(JudgeVerdict::parse("Maybe").verdict, Verdict::Unparseable);
        assert_eq!(JudgeVerdict::parse("Nope").verdict, Verdict::Unparseable);
        assert_eq!(JudgeVerdict::parse("").verdict, Verdict::Unparseable);
    }

    fn scripted_judge(reply: &'static str) -> ScriptedBackend {
        ScriptedBackend::new("judge", move |_: &CompletionRequest| Ok(reply.to_string()))
    }

    #[test]
    fn judge_scores() {
        let yes = score_llm_judge("q", "Nothing", "Nothing; they are safe to eat.", &scripted_judge("Yes")).unwrap();
        assert_eq!((yes.verdict, yes.score()), (Verdict::Yes, 1.0));
        let no = score_llm_judge("q", "125 mph.", "165 mph.", &scripted_judge("No")).unwrap();
        assert_eq!(no.score(), 0.0);
        let maybe = score_llm_judge("q", "a", "b", &scripted_judge("Maybe")).unwrap();
        assert_eq!((maybe.verdict, maybe.score()), (Verdict::Unparseable, 0.0));
    }

    #[test]
    fn judge_prompt_is_deterministic() {
        let r = judge_request("Q?", "A", "B");
        assert_eq!((r.temperature, r.top_p), (0.0, 1.0));
        assert!(r.prompt.ends_with("Question: Q?\nAnswer 1: A\nAnswer 2: B\nAre both of the answers same?"));
    }

    #[test]
    fn judge_matrix_mirrors_script() {
        let judge = ScriptedBackend::new("judge", |r: &CompletionRequest| {
            let tail = r.prompt.rsplit("Answer 1: ").next().unwrap();
            Ok(if tail.starts_with("x\nAnswer 2: y") || tail.starts_with("y\nAnswer 2: x") {
                "Yes".into()
            } else if tail.starts_with("x\nAnswer 2: z") {
                "Maybe".into()
            } else {
                "No".into()
            })
        });
        let b = build_matrix(&set(&["x", "y", "z"]), Oracle::LlmJudge(&judge), Symmetrization::Directed).unwrap();
        assert_eq!(b.matrix.rows(), &[vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        assert_eq!(b.unparseable(), 1);
        assert_eq!(b.pairs.len(), 6);
    }

    #[test]
    fn min_policy_takes_the_weaker_direction() {
        let scorer = ScriptedScorer::new("nli", |r: &ScoreRequest| {
            let e = if r.text_a == "a" { 0.9 } else { 0.4 };
            Ok(ScoreResponse::Probs(NliProbs { entailment: e, contradiction: 0.0, neutral: 1.0 - e }))
        });
        let oracle = Oracle::Nli(&scorer, NliLabel::Entail);
        let b = build_matrix(&set(&["a", "b"]), oracle, Symmetrization::Min).unwrap();
        assert_eq!(b.matrix.get(0, 1), 0.4);
        assert_eq!(b.matrix.get(1, 0), 0.4);
        let mean = build_matrix(&set(&["a", "b"]), oracle, Symmetrization::Mean).unwrap();
        assert!((mean.matrix.get(0, 1) - 0.65).abs() < 1e-12);
        let again = MatrixBuild::reassemble(OracleKind::NliEntail, 2, &b.pairs, Symmetrization::Mean).unwrap();
        assert_eq!(again, mean.matrix);
    }

    #[test]
    fn score_nli_combines_directions() {
        let scorer = ScriptedScorer::new("nli", |r: &ScoreRequest| {
            let c = if r.text_a == "a" { 0.2 } else { 0.6 };
            Ok(ScoreResponse::Probs(NliProbs { entailment: 0.0, contradiction: c, neutral: 1.0 - c }))
        });
        let s = score_nli("a", "b", &scorer, NliLabel::Contra, Symmetrization::Max).unwrap();
        assert_eq!(s, 0.6);
    }

    #[test]
    fn failed_pairs_score_zero() {
        let scorer = ScriptedScorer::new("pp", |r: &ScoreRequest| {
            if r.text_a == "b" || r.text_b.as_deref() == Some("b") {
                Err(ScorerError::Unavailable("down".into()))
            } else {
                Ok(ScoreResponse::Score(0.95))
            }
        });
        let b = build_matrix(&set(&["a", "b", "c"]), Oracle::Paraphrase(&scorer), Symmetrization::Mean).unwrap();
        assert_eq!(b.failed_pairs(), 2);
        assert_eq!(b.matrix.get(0, 1), 0.0);
        assert_eq!(b.matrix.get(0, 2), 0.95);
    }

    #[test]
    fn ner_extractor_reads_entities() {
        let scorer = ScriptedScorer::new("ner", |_: &ScoreRequest| Ok(ScoreResponse::Entities(vec!["Georgia".into()])));
        let ex = ScorerEntityExtractor { scorer: &scorer };
        assert_eq!(ex.extract("Georgia.").unwrap(), vec!["Georgia".to_string()]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn call_counts_are_bounded(texts in prop::collection::vec("[a-c]{1,2}", 2..7)) {
            let mut answers = AnswerSet::new("q", "Q?");
            for t in &texts {
                answers.push(AnswerRecord::new(t.clone(), Provenance::Temperature { value: 1.0 })).unwrap();
            }
            let n = texts.len();
            let judge = CountingBackend::new(Arc::new(scripted_judge("Yes")));
            let b = build_matrix(&answers, Oracle::LlmJudge(&judge), Symmetrization::Mean).unwrap();
            prop_assert!(judge.calls() <= n * (n - 1));
            prop_assert_eq!(judge.calls(), b.calls);
            prop_assert!(b.matrix.validate().is_ok());

            let pp = CountingScorer::new(Arc::new(ScriptedScorer::new("pp", |_: &ScoreRequest| Ok(ScoreResponse::Score(0.5)))));
            let b = build_matrix(&answers, Oracle::Paraphrase(&pp), Symmetrization::Mean).unwrap();
            prop_assert!(pp.calls() <= n * (n - 1) / 2);
            prop_assert!(b.matrix.rows().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
