use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::ScorerError;

/// Scorer service tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreTask {
    Paraphrase,
    Nli,
    Bleurt,
    Ner,
}

impl ScoreTask {
    pub fn name(self) -> &'static str {
        match self {
            ScoreTask::Paraphrase => "paraphrase",
            ScoreTask::Nli => "nli",
            ScoreTask::Bleurt => "bleurt",
            ScoreTask::Ner => "ner",
        }
    }
}

/// Request body: `{"task": ..., "text_a": ..., "text_b": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub task: ScoreTask,
    pub text_a: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_b: Option<String>,
}

impl ScoreRequest {
    pub fn pair(task: ScoreTask, a: &str, b: &str) -> Self {
        Self {
            task,
            text_a: a.to_string(),
            text_b: Some(b.to_string()),
        }
    }

    pub fn ner(text: &str) -> Self {
        Self {
            task: ScoreTask::Ner,
            text_a: text.to_string(),
            text_b: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NliProbs {
    pub entailment: f64,
    pub contradiction: f64,
    pub neutral: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NliLabel {
    Entail,
    Contra,
}

impl NliProbs {
    pub fn get(&self, label: NliLabel) -> f64 {
        match label {
            NliLabel::Entail => self.entailment,
            NliLabel::Contra => self.contradiction,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScoreResponse {
    Score(f64),
    Probs(NliProbs),
    Entities(Vec<String>),
}

impl ScoreResponse {
    /// Decodes a response body for `task`. Unknown extra fields such as
    /// `model_id` or `latency_ms` are ignored.
    pub fn from_wire(task: ScoreTask, body: &str) -> Result<Self, ScorerError> {
        let value: Value =
            serde_json::from_str(body).map_err(|e| ScorerError::Malformed(e.to_string()))?;
        Self::from_value(task, &value)
    }

    pub fn from_value(task: ScoreTask, value: &Value) -> Result<Self, ScorerError> {
        let malformed = |what: &str| ScorerError::Malformed(format!("{} response: {what}", task.name()));
        match task {
            ScoreTask::Paraphrase | ScoreTask::Bleurt => {
                let score = value
                    .get("score")
                    .and_then(Value::as_f64)
                    .ok_or_else(|| malformed("missing numeric \"score\""))?;
                if !score.is_finite() {
                    return Err(malformed("non-finite score"));
                }
                if task == ScoreTask::Paraphrase && !(0.0..=1.0).contains(&score) {
                    return Err(malformed("probability outside [0,1]"));
                }
                Ok(ScoreResponse::Score(score))
            }
            ScoreTask::Nli => {
                let probs = value.get("probs").ok_or_else(|| malformed("missing \"probs\""))?;
                let field = |name: &str| {
                    probs
                        .get(name)
                        .and_then(Value::as_f64)
                        .filter(|p| (0.0..=1.0).contains(p))
                        .ok_or_else(|| malformed(&format!("bad or missing probability \"{name}\"")))
                };
                Ok(ScoreResponse::Probs(NliProbs {
                    entailment: field("entailment")?,
                    contradiction: field("contradiction")?,
                    neutral: field("neutral")?,
                }))
            }
            ScoreTask::Ner => {
                let list = value
                    .get("entities")
                    .and_then(Value::as_array)
                    .ok_or_else(|| malformed("missing \"entities\" list"))?;
                list.iter()
                    .map(|e| e.as_str().map(str::to_string).ok_or_else(|| malformed("non-string entity")))
                    .collect::<Result<Vec<_>, _>>()
                    .map(ScoreResponse::Entities)
            }
        }
    }

    pub fn to_wire(&self) -> Value {
        match self {
            ScoreResponse::Score(s) => json!({ "score": s }),
            ScoreResponse::Probs(p) => json!({ "probs": p }),
            ScoreResponse::Entities(e) => json!({ "entities": e }),
        }
    }

    pub fn score(&self) -> Option<f64> {
        match self {
            ScoreResponse::Score(s) => Some(*s),
            _ => None,
        }
    }

    pub fn probs(&self) -> Option<NliProbs> {
        match self {
            ScoreResponse::Probs(p) => Some(*p),
            _ => None,
        }
    }

    pub fn entities(&self) -> Option<&[String]> {
        match self {
            ScoreResponse::Entities(e) => Some(e),
            _ => None,
        }
    }
}

pub trait Scorer: Send + Sync {
    fn id(&self) -> &str;

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError>;
}
