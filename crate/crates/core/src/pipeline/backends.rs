use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::Context;

use super::config::RunConfig;
use crate::backend::{
    BackendConfig, BackendKind, CacheStats, CachedBackend, CachedScorer, CallCache, CompletionBackend, FixtureSet,
    HttpBackend, HttpScorer, MockBackend, MockScorer, Scorer,
};

/// Backends bound to their roles, all wrapped in the shared call cache.
pub struct Backends {
    pub main: Arc<dyn CompletionBackend>,
    pub aux: Arc<dyn CompletionBackend>,
    pub judge: Option<Arc<dyn CompletionBackend>>,
    pub scorer: Option<Arc<dyn Scorer>>,
    pub cache: Arc<CallCache>,
}

impl Backends {
    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }

    /// Builds every backend named by a role. `mock_fixtures` replaces each
    /// with a fixture-replaying mock that keeps the configured name and
    /// model, so cache keys are unchanged.
    pub fn build(cfg: &RunConfig, cache: Arc<CallCache>, mock_fixtures: Option<&Path>) -> anyhow::Result<Self> {
        let override_set = match mock_fixtures {
            Some(p) => Some(Arc::new(
                FixtureSet::load(p).with_context(|| format!("loading fixtures {}", p.display()))?,
            )),
            None => None,
        };
        let mut fixture_sets: BTreeMap<String, Arc<FixtureSet>> = BTreeMap::new();
        let mut fixtures_for = |name: &str, b: &BackendConfig| -> anyhow::Result<Option<Arc<FixtureSet>>> {
            if let Some(set) = &override_set {
                return Ok(Some(set.clone()));
            }
            if b.kind != BackendKind::Mock {
                return Ok(None);
            }
            let path = b.fixtures.as_ref().expect("validated");
            let key = path.display().to_string();
            if let Some(set) = fixture_sets.get(&key) {
                return Ok(Some(set.clone()));
            }
            let set = Arc::new(
                FixtureSet::load(path).with_context(|| format!("loading fixtures for backend {name}"))?,
            );
            fixture_sets.insert(key, set.clone());
            Ok(Some(set))
        };

        let mut completions: BTreeMap<String, Arc<dyn CompletionBackend>> = BTreeMap::new();
        let mut completion = |name: &str| -> anyhow::Result<Arc<dyn CompletionBackend>> {
            if let Some(b) = completions.get(name) {
                return Ok(b.clone());
            }
            let b = &cfg.backends[name];
            let inner: Arc<dyn CompletionBackend> = match fixtures_for(name, b)? {
                Some(set) => Arc::new(MockBackend::new(name, b.model.clone(), set)),
                None => Arc::new(HttpBackend::new(name, b.clone()).with_context(|| format!("backend {name}"))?),
            };
            let wrapped: Arc<dyn CompletionBackend> = Arc::new(CachedBackend::new(inner, cache.clone()));
            completions.insert(name.to_string(), wrapped.clone());
            Ok(wrapped)
        };

        let main = completion(&cfg.roles.main)?;
        let aux = completion(&cfg.roles.aux)?;
        let judge = cfg.roles.judge.as_deref().map(&mut completion).transpose()?;
        let scorer = match cfg.roles.scorer.as_deref() {
            None => None,
            Some(name) => {
                let b = &cfg.backends[name];
                let inner: Arc<dyn Scorer> = match fixtures_for(name, b)? {
                    Some(set) => Arc::new(MockScorer::new(name, set)),
                    None => Arc::new(HttpScorer::new(name, b.clone()).with_context(|| format!("scorer {name}"))?),
                };
                Some(Arc::new(CachedScorer::new(inner, cache.clone())) as Arc<dyn Scorer>)
            }
        };
        Ok(Self {
            main,
            aux,
            judge,
            scorer,
            cache,
        })
    }
}
