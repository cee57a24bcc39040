//! Completion and scorer clients.
//!
//! Every model call goes through [`CompletionBackend`] and every neural
//! scorer call through [`Scorer`]. Real backends speak HTTP; the mock
//! backends replay fixtures keyed by request hash, so whole runs can be
//! reproduced without a network.

mod cache;
mod config;
mod http;
mod limiter;
mod mock;
mod retry;
mod scorer;
mod transcript;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheStats, CachedBackend, CachedScorer, CallCache};
pub use config::{ApiStyle, BackendConfig, BackendKind};
pub use http::{HttpBackend, HttpScorer};
pub use limiter::InFlightLimiter;
pub use mock::{
    completion_fixture_key, score_fixture_key, FixtureEntry, FixtureError, FixtureRecorder,
    FixtureSet, MockBackend, MockScorer, RecordingBackend, RecordingScorer, ScriptedBackend,
    ScriptedScorer,
};
pub use retry::{Retried, RetryPolicy};
pub use transcript::{Exchange, Transcript};
pub use scorer::{NliLabel, NliProbs, ScoreRequest, ScoreResponse, ScoreTask, Scorer};

/// The part a backend plays in a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// The model under evaluation.
    Main,
    /// Paraphrase generator.
    Aux,
    /// Pairwise equivalence judge.
    Judge,
    /// Neural scorer service.
    Scorer,
}

impl Role {
    pub fn name(self) -> &'static str {
        match self {
            Role::Main => "main",
            Role::Aux => "aux",
            Role::Judge => "judge",
            Role::Scorer => "scorer",
        }
    }
}

/// One model call: a rendered prompt plus decoding parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            temperature: 0.0,
            top_p: 1.0,
            max_tokens: 256,
            stop: None,
            seed: None,
        }
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn top_p(mut self, p: f64) -> Self {
        self.top_p = p;
        self
    }

    pub fn max_tokens(mut self, n: u32) -> Self {
        self.max_tokens = n;
        self
    }

    pub fn stop(mut self, stop: Vec<String>) -> Self {
        self.stop = Some(stop);
        self
    }

    pub fn seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature {} must be >= 0",
                self.temperature
            )));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(BackendError::InvalidRequest(format!(
                "top_p {} must lie in (0, 1]",
                self.top_p
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<Usage>,
    /// Transient failures retried before this completion succeeded.
    #[serde(skip)]
    pub retries: u32,
}

impl Completion {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            finish_reason: Some("stop".into()),
            usage: None,
            retries: 0,
        }
    }
}

pub trait CompletionBackend: Send + Sync {
    /// Stable identifier; part of every cache key.
    fn id(&self) -> &str;

    fn model(&self) -> &str {
        ""
    }

    /// Whether the backend honours `CompletionRequest::seed`.
    fn supports_seed(&self) -> bool {
        true
    }

    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError>;
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("request timed out")]
    Timeout,
    #[error("http status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no mock fixture for request key {key}")]
    FixtureMiss { key: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("gave up after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        last: Box<BackendError>,
    },
}

impl BackendError {
    /// Timeouts, connection failures, 429 and 5xx responses are retried.
    pub fn is_transient(&self) -> bool {
        match self {
            BackendError::Transport(_) | BackendError::Timeout => true,
            BackendError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScorerError {
    #[error("scorer unavailable: {0}")]
    Unavailable(String),
    #[error("malformed scorer response: {0}")]
    Malformed(String),
}

/// Counts every request passing through it; used for per-question call
/// accounting in run records.
pub struct CountingBackend {
    inner: Arc<dyn CompletionBackend>,
    calls: AtomicUsize,
}

impl CountingBackend {
    pub fn new(inner: Arc<dyn CompletionBackend>) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl CompletionBackend for CountingBackend {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn model(&self) -> &str {
        self.inner.model()
    }

    fn supports_seed(&self) -> bool {
        self.inner.supports_seed()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(req)
    }
}

pub struct CountingScorer {
    inner: Arc<dyn Scorer>,
    calls: AtomicUsize,
}

impl CountingScorer {
    pub fn new(inner: Arc<dyn Scorer>) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Scorer for CountingScorer {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.score(req)
    }
}

fn sha256_hex(value: &serde_json::Value) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}
