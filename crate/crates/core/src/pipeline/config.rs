use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::a2c::A2CConfig;
use crate::agreement::OracleKind;
use crate::backend::BackendConfig;
use crate::generation::VariationConfig;
use crate::metrics::Symmetrization;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    pub path: PathBuf,
    #[serde(default)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NerSource {
    /// Capitalized-run extractor; needs no scorer.
    #[default]
    Heuristic,
    Scorer,
    Off,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub paraphrase: bool,
    pub nli: bool,
    pub judge: bool,
    pub bleurt: bool,
    pub ner: NerSource,
    pub symmetrization: Symmetrization,
    pub cluster_on: OracleKind,
    pub cluster_threshold: Option<f64>,
    /// Threshold pairwise scores before averaging them.
    pub binarize: bool,
    pub accuracy_cutoff: f64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            paraphrase: true,
            nli: true,
            judge: true,
            bleurt: true,
            ner: NerSource::Heuristic,
            symmetrization: Symmetrization::Mean,
            cluster_on: OracleKind::Paraphrase,
            cluster_threshold: None,
            binarize: false,
            accuracy_cutoff: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoleSection {
    pub main: String,
    pub aux: String,
    #[serde(default)]
    pub judge: Option<String>,
    #[serde(default)]
    pub scorer: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub workers: usize,
    pub max_failure_fraction: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("run"),
            workers: 4,
            max_failure_fraction: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    #[serde(default)]
    pub variation: VariationConfig,
    #[serde(default)]
    pub oracles: OracleSection,
    #[serde(default)]
    pub a2c: A2CConfig,
    pub backends: BTreeMap<String, BackendConfig>,
    pub roles: RoleSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Parses a TOML file. Relative paths resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("cannot read config {}: {e}", path.display()))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate().map_err(|e| anyhow::anyhow!("invalid config {}: {e}", path.display()))?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.dataset.path);
        fix(&mut self.output.dir);
        for b in self.backends.values_mut() {
            if let Some(f) = b.fixtures.as_mut() {
                fix(f);
            }
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.variation.validate()?;
        self.a2c.validate()?;
        for (name, b) in &self.backends {
            b.validate().map_err(|e| format!("backend {name}: {e}"))?;
        }
        let roles = [
            ("main", Some(&self.roles.main)),
            ("aux", Some(&self.roles.aux)),
            ("judge", self.roles.judge.as_ref()),
            ("scorer", self.roles.scorer.as_ref()),
        ];
        for (role, name) in roles {
            if let Some(name) = name {
                if !self.backends.contains_key(name) {
                    return Err(format!("role {role} refers to undefined backend {name:?}"));
                }
            }
        }
        let o = &self.oracles;
        if !(0.0..=1.0).contains(&o.accuracy_cutoff) {
            return Err(format!("accuracy_cutoff must lie in [0, 1], got {}", o.accuracy_cutoff));
        }
        if let Some(t) = o.cluster_threshold {
            if !(t > 0.0 && t <= 1.0) {
                return Err(format!("cluster_threshold must lie in (0, 1], got {t}"));
            }
        }
        if !(0.0..=1.0).contains(&self.output.max_failure_fraction) {
            return Err("max_failure_fraction must lie in [0, 1]".into());
        }
        if self.output.workers == 0 {
            return Err("workers must be at least 1".into());
        }
        let scorer = self.roles.scorer.is_some();
        let judge = self.roles.judge.is_some();
        let selected = (o.paraphrase && scorer) || (o.nli && scorer) || (o.judge && judge);
        if !selected {
            log::info!("no model-backed oracle selected; only lexical metrics will be computed");
        }
        if o.ner == NerSource::Scorer && !scorer {
            return Err("oracles.ner = \"scorer\" needs a scorer role".into());
        }
        Ok(())
    }
}
