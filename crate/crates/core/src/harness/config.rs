use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::backend::{CompletionBackend, MockBackend, RemoteBackend, RemoteConfig, ScriptEntry};
use crate::corpus::{DeerSplit, FactVariant};
use crate::pipeline::{ModuleId, PromptSet, ProposerConfig};
use crate::tuning::TuningPolicy;

/// Which completion service to talk to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Mock {
        #[serde(default)]
        seed: u64,
        /// JSON array of script entries.
        #[serde(default)]
        script: Option<PathBuf>,
    },
    Remote(RemoteConfig),
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig::Mock { seed: 0, script: None }
    }
}

impl BackendConfig {
    pub fn build(&self) -> Result<Arc<dyn CompletionBackend>, HarnessError> {
        Ok(match self {
            BackendConfig::Mock { seed, script } => {
                let entries: Vec<ScriptEntry> = match script {
                    Some(path) => serde_json::from_str(&read(path)?)
                        .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?,
                    None => Vec::new(),
                };
                Arc::new(
                    MockBackend::with_script(*seed, entries)
                        .map_err(|e| HarnessError::Config(format!("mock script pattern: {e}")))?,
                )
            }
            BackendConfig::Remote(cfg) => Arc::new(RemoteBackend::new(cfg.clone())?),
        })
    }
}

/// Where verifier thresholds come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdSource {
    /// Tune on the validation split of `deerlet_path`.
    Tune,
    /// A thresholds JSON file.
    File(PathBuf),
    /// The same threshold for every verifier.
    Uniform(f64),
}

/// Rule generator under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum System {
    /// Proposer plus the active verifiers.
    Pipeline,
    /// Random template filling from the facts.
    RandomFill,
}

impl System {
    pub fn as_str(self) -> &'static str {
        match self {
            System::Pipeline => "pipeline",
            System::RandomFill => "random_fill",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub deer_path: PathBuf,
    /// Needed for threshold tuning.
    pub deerlet_path: Option<PathBuf>,
    /// Human labels for generated rules, DEERLET JSONL keyed by rule id.
    pub labels_path: Option<PathBuf>,
    pub backend: BackendConfig,
    /// Directory with m1.toml .. m5.toml; the built-in prompts otherwise.
    pub prompt_dir: Option<PathBuf>,
    pub few_shot: Option<usize>,
    pub proposer: ProposerConfig,
    pub system: System,
    pub k: usize,
    pub variants: Vec<FactVariant>,
    pub active_modules: BTreeSet<ModuleId>,
    pub thresholds: ThresholdSource,
    pub tuning: TuningPolicy,
    pub seeds: Vec<u64>,
    /// Restrict to one DEER split.
    pub split: Option<DeerSplit>,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            deer_path: PathBuf::from("fixtures/deer.jsonl"),
            deerlet_path: None,
            labels_path: None,
            backend: BackendConfig::default(),
            prompt_dir: None,
            few_shot: None,
            proposer: ProposerConfig::default(),
            system: System::Pipeline,
            k: 10,
            variants: vec![FactVariant::Short3],
            active_modules: ModuleId::VERIFIERS.into(),
            thresholds: ThresholdSource::Uniform(0.5),
            tuning: TuningPolicy::default(),
            seeds: (0..5).collect(),
            split: None,
            output_dir: None,
        }
    }
}

fn read(path: &Path) -> Result<String, HarnessError> {
    std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

impl ExperimentConfig {
    /// Reads a JSON config. Relative paths inside it resolve against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let mut cfg: ExperimentConfig = serde_json::from_str(&read(path)?)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.deer_path);
        self.deerlet_path.as_mut().map(fix);
        self.labels_path.as_mut().map(fix);
        self.prompt_dir.as_mut().map(fix);
        self.output_dir.as_mut().map(fix);
        if let ThresholdSource::File(p) = &mut self.thresholds {
            fix(p);
        }
        if let BackendConfig::Mock { script: Some(p), .. } = &mut self.backend {
            fix(p);
        }
    }

    /// Checks values and that every referenced path exists.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty".into());
        }
        if self.variants.is_empty() {
            return bad("variants must not be empty".into());
        }
        if self.active_modules.contains(&ModuleId::M1) {
            return bad("M1 is the proposer, not a filter".into());
        }
        if self.thresholds == ThresholdSource::Tune && self.deerlet_path.is_none() {
            return bad("threshold tuning needs deerlet_path".into());
        }
        self.tuning.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut paths: Vec<&Path> = vec![&self.deer_path];
        paths.extend(self.deerlet_path.as_deref());
        paths.extend(self.labels_path.as_deref());
        paths.extend(self.prompt_dir.as_deref());
        if let ThresholdSource::File(p) = &self.thresholds {
            paths.push(p);
        }
        if let BackendConfig::Mock { script: Some(p), .. } = &self.backend {
            paths.push(p);
        }
        match paths.into_iter().find(|p| !p.exists()) {
            Some(p) => bad(format!("{} does not exist", p.display())),
            None => Ok(()),
        }
    }

    pub fn prompts(&self) -> Result<PromptSet, HarnessError> {
        let set = match &self.prompt_dir {
            Some(dir) => PromptSet::load_dir(dir)?,
            None => PromptSet::builtin(),
        };
        Ok(set.with_few_shot_limit(self.few_shot))
    }
}

/// Command-line values that replace config keys when present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub k: Option<usize>,
    pub seeds: Option<Vec<u64>>,
    pub variants: Option<Vec<FactVariant>>,
    pub active_modules: Option<BTreeSet<ModuleId>>,
    pub thresholds: Option<ThresholdSource>,
    pub system: Option<System>,
    pub output_dir: Option<PathBuf>,
    pub mock_seed: Option<u64>,
}

impl ThresholdSource {
    /// `tune`, a number (uniform threshold) or a file path.
    pub fn parse(s: &str) -> ThresholdSource {
        if s == "tune" {
            ThresholdSource::Tune
        } else if let Ok(v) = s.parse::<f64>() {
            ThresholdSource::Uniform(v)
        } else {
            ThresholdSource::File(PathBuf::from(s))
        }
    }
}

impl ExperimentConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(k) = o.k {
            self.k = k;
        }
        if let Some(s) = &o.seeds {
            self.seeds = s.clone();
        }
        if let Some(v) = &o.variants {
            self.variants = v.clone();
        }
        if let Some(m) = &o.active_modules {
            self.active_modules = m.clone();
        }
        if let Some(t) = &o.thresholds {
            self.thresholds = t.clone();
        }
        if let Some(s) = o.system {
            self.system = s;
        }
        if let Some(d) = &o.output_dir {
            self.output_dir = Some(d.clone());
        }
        if let (Some(new), BackendConfig::Mock { seed, .. }) = (o.mock_seed, &mut self.backend) {
            *seed = new;
        }
    }
}
