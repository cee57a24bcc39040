use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::{
    sha256_hex, BackendError, Completion, CompletionBackend, CompletionRequest, ScoreRequest,
    ScoreResponse, ScoreTask, Scorer, ScorerError,
};

/// Fixture key of a completion: SHA-256 over prompt, temperature, top-p and
/// seed.
pub fn completion_fixture_key(req: &CompletionRequest) -> String {
    sha256_hex(&json!([req.prompt, req.temperature, req.top_p, req.seed]))
}

pub fn score_fixture_key(req: &ScoreRequest) -> String {
    sha256_hex(&json!([req.task, req.text_a, req.text_b]))
}

/// One line of a fixture file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FixtureEntry {
    Completion {
        prompt: String,
        temperature: f64,
        top_p: f64,
        #[serde(default)]
        seed: Option<u64>,
        text: String,
    },
    Score {
        task: ScoreTask,
        text_a: String,
        #[serde(default)]
        text_b: Option<String>,
        response: Value,
    },
}

impl FixtureEntry {
    pub fn key(&self) -> String {
        match self {
            FixtureEntry::Completion {
                prompt,
                temperature,
                top_p,
                seed,
                ..
            } => sha256_hex(&json!([prompt, temperature, top_p, seed])),
            FixtureEntry::Score {
                task,
                text_a,
                text_b,
                ..
            } => sha256_hex(&json!([task, text_a, text_b])),
        }
    }
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixtures: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("fixture line {line} repeats key {key} (first seen on line {first})")]
    Collision { line: usize, first: usize, key: String },
}

/// Fixture responses indexed by request key.
#[derive(Debug, Default, Clone)]
pub struct FixtureSet {
    completions: HashMap<String, String>,
    scores: HashMap<String, Value>,
}

impl FixtureSet {
    /// Loads a JSON-lines fixture file. A repeated key is an error, never a
    /// silent overwrite.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let reader = BufReader::new(File::open(path)?);
        let mut entries = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(&line).map_err(|e| FixtureError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push((i + 1, entry));
        }
        Self::from_entries(entries)
    }

    pub fn from_entries(
        entries: impl IntoIterator<Item = (usize, FixtureEntry)>,
    ) -> Result<Self, FixtureError> {
        let mut set = Self::default();
        let mut seen: HashMap<String, usize> = HashMap::new();
        for (line, entry) in entries {
            let key = entry.key();
            if let Some(&first) = seen.get(&key) {
                return Err(FixtureError::Collision { line, first, key });
            }
            seen.insert(key.clone(), line);
            match entry {
                FixtureEntry::Completion { text, .. } => {
                    set.completions.insert(key, text);
                }
                FixtureEntry::Score { response, .. } => {
                    set.scores.insert(key, response);
                }
            }
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.completions.len() + self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Completion backend answering from a [`FixtureSet`]. It borrows the id and
/// model of the backend it stands in for, so cache keys line up with real
/// runs.
pub struct MockBackend {
    id: String,
    model: String,
    fixtures: Arc<FixtureSet>,
}

impl MockBackend {
    pub fn new(id: impl Into<String>, model: impl Into<String>, fixtures: Arc<FixtureSet>) -> Self {
        Self {
            id: id.into(),
            model: model.into(),
            fixtures,
        }
    }
}

impl CompletionBackend for MockBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        let key = completion_fixture_key(req);
        self.fixtures
            .completions
            .get(&key)
            .map(Completion::text)
            .ok_or(BackendError::FixtureMiss { key })
    }
}

pub struct MockScorer {
    id: String,
    fixtures: Arc<FixtureSet>,
}

impl MockScorer {
    pub fn new(id: impl Into<String>, fixtures: Arc<FixtureSet>) -> Self {
        Self {
            id: id.into(),
            fixtures,
        }
    }
}

impl Scorer for MockScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let key = score_fixture_key(req);
        let value = self.fixtures.scores.get(&key).ok_or_else(|| {
            ScorerError::Unavailable(format!("no mock fixture for {} request {key}", req.task.name()))
        })?;
        ScoreResponse::from_value(req.task, value)
    }
}

type CompletionFn = dyn Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync;
type ScoreFn = dyn Fn(&ScoreRequest) -> Result<ScoreResponse, ScorerError> + Send + Sync;

/// Completion backend driven by a closure.
pub struct ScriptedBackend {
    id: String,
    respond: Box<CompletionFn>,
}

impl ScriptedBackend {
    pub fn new(
        id: impl Into<String>,
        respond: impl Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            respond: Box::new(respond),
        }
    }
}

impl CompletionBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, req: &CompletionRequest) -> Result<Completion, BackendError> {
        req.validate()?;
        (self.respond)(req).map(Completion::text)
    }
}

pub struct ScriptedScorer {
    id: String,
    respond: Box<ScoreFn>,
}

impl ScriptedScorer {
    pub fn new(
        id: impl Into<String>,
        respond: impl Fn(&ScoreRequest) -> Result<ScoreResponse, ScorerError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            respond: Box::new(respond),
        }
    }
}

impl Scorer for ScriptedScorer {
    fn id(&self) -> &str {
        &self.id
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        (self.respond)(req)
    }
}

/// Collects successful calls into fixture entries, for turning a scripted
/// session into a replayable fixture file.
#[derive(Debug, Default)]
pub struct FixtureRecorder {
    entries: Mutex<BTreeMap<String, FixtureEntry>>,
}

impl FixtureRecorder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, entry: FixtureEntry) {
        let key = entry.key();
        let mut entries = self.entries.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(existing) = entries.get(&key) {
            if existing != &entry {
                log::warn!("recorder: conflicting responses for key {key}, keeping the first");
            }
            return;
        }
        entries.insert(key, entry);
    }

    pub fn entries(&self) -> Vec<FixtureEntry> {
        self.entries
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .values()
            .cloned()
            .collect()
    }

    /// Writes all entries sorted by key, one JSON object per line.
    pub fn write(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for entry in self.entries() {
            serde_json::to_writer(&mut w, &entry)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

pub struct RecordingBackend {
    inner: Arc<dyn CompletionBackend>,
    recorder: Arc<FixtureRecorder>,
}

impl RecordingBackend {
    pub fn new(inner: Arc<dyn CompletionBackend>, recorder: Arc<FixtureRecorder>) -> Self {
        Self { inner, recorder }
    }
}

impl CompletionBackend for RecordingBackend {
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
        let c = self.inner.complete(req)?;
        self.recorder.record(FixtureEntry::Completion {
            prompt: req.prompt.clone(),
            temperature: req.temperature,
            top_p: req.top_p,
            seed: req.seed,
            text: c.text.clone(),
        });
        Ok(c)
    }
}

pub struct RecordingScorer {
    inner: Arc<dyn Scorer>,
    recorder: Arc<FixtureRecorder>,
}

impl RecordingScorer {
    pub fn new(inner: Arc<dyn Scorer>, recorder: Arc<FixtureRecorder>) -> Self {
        Self { inner, recorder }
    }
}

impl Scorer for RecordingScorer {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let r = self.inner.score(req)?;
        self.recorder.record(FixtureEntry::Score {
            task: req.task,
            text_a: req.text_a.clone(),
            text_b: req.text_b.clone(),
            response: r.to_wire(),
        });
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(prompt: &str, t: f64, text: &str) -> FixtureEntry {
        FixtureEntry::Completion {
            prompt: prompt.into(),
            temperature: t,
            top_p: 0.9,
            seed: None,
            text: text.into(),
        }
    }

    #[test]
    fn fixture_hit_and_miss() {
        let set = FixtureSet::from_entries([(1, entry("Q", 0.2, "A"))]).unwrap();
        let mock = MockBackend::new("main", "m", Arc::new(set));
        let req = CompletionRequest::new("Q").temperature(0.2).top_p(0.9);
        assert_eq!(mock.complete(&req).unwrap().text, "A");
        let miss = mock.complete(&req.clone().temperature(0.5)).unwrap_err();
        assert!(matches!(miss, BackendError::FixtureMiss { .. }));
    }

    #[test]
    fn key_collisions_are_rejected() {
        let err = FixtureSet::from_entries([(1, entry("Q", 0.2, "A")), (2, entry("Q", 0.2, "B"))])
            .unwrap_err();
        assert!(matches!(err, FixtureError::Collision { line: 2, first: 1, .. }));
    }

    #[test]
    fn recorder_output_replays() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        let recorder = Arc::new(FixtureRecorder::new());
        let inner: Arc<dyn CompletionBackend> =
            Arc::new(ScriptedBackend::new("s", |r: &CompletionRequest| Ok(format!("echo {}", r.prompt))));
        let rec = RecordingBackend::new(inner, recorder.clone());
        let scorer: Arc<dyn Scorer> = Arc::new(ScriptedScorer::new("sc", |_: &ScoreRequest| {
            Ok(ScoreResponse::Score(0.93))
        }));
        let rec_scorer = RecordingScorer::new(scorer, recorder.clone());
        let req = CompletionRequest::new("hello").seed(Some(9));
        rec.complete(&req).unwrap();
        rec.complete(&req).unwrap();
        let sreq = ScoreRequest::pair(ScoreTask::Paraphrase, "a", "b");
        rec_scorer.score(&sreq).unwrap();
        recorder.write(&path).unwrap();

        let set = Arc::new(FixtureSet::load(&path).unwrap());
        assert_eq!(set.len(), 2);
        let mock = MockBackend::new("s", "", set.clone());
        assert_eq!(mock.complete(&req).unwrap().text, "echo hello");
        assert_eq!(MockScorer::new("sc", set).score(&sreq).unwrap(), ScoreResponse::Score(0.93));
    }

    #[test]
    fn parse_errors_name_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jsonl");
        std::fs::write(&path, "\n{\"kind\":\"bogus\"}\n").unwrap();
        assert!(matches!(FixtureSet::load(&path), Err(FixtureError::Parse { line: 2, .. })));
    }
}
