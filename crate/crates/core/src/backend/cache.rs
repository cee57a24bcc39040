use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    sha256_hex, BackendError, Completion, CompletionBackend, CompletionRequest, ScoreRequest,
    ScoreResponse, Scorer, ScorerError,
};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheLine {
    key: String,
    value: String,
    created_at: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub hits: usize,
    pub misses: usize,
}

/// Content-addressed response cache, persisted as an append-only JSON-lines
/// file. On reload the last line for a key wins.
#[derive(Debug)]
pub struct CallCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, String>>,
    writer: Mutex<Option<BufWriter<File>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl CallCache {
    pub fn in_memory() -> Self {
        Self {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    /// Opens (or creates) a cache file and loads its entries.
    pub fn open(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CacheLine>(&line) {
                    Ok(entry) => {
                        if let Some(old) = entries.insert(entry.key.clone(), entry.value) {
                            if old != entries[&entry.key] {
                                log::warn!(
                                    "cache {}: key {} rewritten at line {}, keeping the later value",
                                    path.display(),
                                    entry.key,
                                    lineno + 1
                                );
                            }
                        }
                    }
                    Err(e) => log::warn!(
                        "cache {}: skipping unreadable line {}: {e}",
                        path.display(),
                        lineno + 1
                    ),
                }
            }
        } else if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(BufWriter::new(file))),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let found = self
            .entries
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(key)
            .cloned();
        match found {
            Some(_) => self.hits.fetch_add(1, Ordering::Relaxed),
            None => self.misses.fetch_add(1, Ordering::Relaxed),
        };
        found
    }

    pub fn put(&self, key: &str, value: &str) -> std::io::Result<()> {
        self.entries
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .insert(key.to_string(), value.to_string());
        let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(w) = writer.as_mut() {
            let created_at = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let line = CacheLine {
                key: key.to_string(),
                value: value.to_string(),
                created_at,
            };
            serde_json::to_writer(&mut *w, &line)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> CacheStats {
        CacheStats {
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }
}

/// Cache key of a completion: backend id, model, prompt and the decoding
/// parameters that change the output distribution.
pub fn completion_cache_key(backend: &str, model: &str, req: &CompletionRequest) -> String {
    sha256_hex(&json!([
        "completion",
        backend,
        model,
        req.prompt,
        req.temperature,
        req.top_p,
        req.seed
    ]))
}

pub fn score_cache_key(scorer: &str, req: &ScoreRequest) -> String {
    sha256_hex(&json!(["score", scorer, req.task, req.text_a, req.text_b]))
}

pub struct CachedBackend {
    inner: Arc<dyn CompletionBackend>,
    cache: Arc<CallCache>,
}

impl CachedBackend {
    pub fn new(inner: Arc<dyn CompletionBackend>, cache: Arc<CallCache>) -> Self {
        Self { inner, cache }
    }
}

impl CompletionBackend for CachedBackend {
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
        let key = completion_cache_key(self.inner.id(), self.inner.model(), req);
        if let Some(raw) = self.cache.get(&key) {
            match serde_json::from_str::<Completion>(&raw) {
                Ok(c) => return Ok(c),
                Err(e) => log::warn!("ignoring undecodable cache entry {key}: {e}"),
            }
        }
        let completion = self.inner.complete(req)?;
        let raw = serde_json::to_string(&completion)
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        if let Err(e) = self.cache.put(&key, &raw) {
            log::warn!("could not persist cache entry {key}: {e}");
        }
        Ok(completion)
    }
}

pub struct CachedScorer {
    inner: Arc<dyn Scorer>,
    cache: Arc<CallCache>,
}

impl CachedScorer {
    pub fn new(inner: Arc<dyn Scorer>, cache: Arc<CallCache>) -> Self {
        Self { inner, cache }
    }
}

impl Scorer for CachedScorer {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let key = score_cache_key(self.inner.id(), req);
        if let Some(raw) = self.cache.get(&key) {
            if let Ok(r) = ScoreResponse::from_wire(req.task, &raw) {
                return Ok(r);
            }
        }
        let response = self.inner.score(req)?;
        if let Err(e) = self.cache.put(&key, &response.to_wire().to_string()) {
            log::warn!("could not persist cache entry {key}: {e}");
        }
        Ok(response)
    }
}
