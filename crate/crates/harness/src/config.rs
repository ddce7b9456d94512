//! Experiment configuration: one JSON document layered over built-in
//! defaults, then `--set key=value` overrides, then `--seed`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use unrank_core::{
    BaselineConfig, ForgetProtocol, GenConfig, Method, ScorerKind, ScorerShape, TrainConfig, UnlearnConfig,
};

use crate::error::HarnessError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub out_dir: PathBuf,
    pub run_id: String,
    /// Directory with `train/` and `test/` dataset folders. Falls back to
    /// `<run>/data`, then to in-memory generation.
    pub data_dir: Option<PathBuf>,
    pub teacher: Option<PathBuf>,
    pub forget_spec: Option<PathBuf>,
    pub substitutes: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs"),
            run_id: "run".into(),
            data_dir: None,
            teacher: None,
            forget_spec: None,
            substitutes: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScorerSettings {
    pub kind: ScorerKind,
    pub hidden: usize,
}

impl Default for ScorerSettings {
    fn default() -> Self {
        Self { kind: ScorerKind::BiEncoder, hidden: 64 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub k: Vec<usize>,
    pub gamma: Vec<f64>,
    pub fraction: Vec<f64>,
    pub methods: Vec<Method>,
    pub repeats: usize,
    /// Concurrent cells; 0 uses every available core.
    pub workers: usize,
    /// Epochs per "epoch unit" in fraction trajectories.
    pub epoch_unit: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            k: vec![2, 5, 10, 15],
            gamma: vec![0.0, 0.25, 0.5, 0.75],
            fraction: vec![0.01, 0.05, 0.10, 0.20],
            methods: Method::ALL.to_vec(),
            repeats: 3,
            workers: 1,
            epoch_unit: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Overrides every component seed when set.
    pub seed: Option<u64>,
    pub precision: Precision,
    pub paths: Paths,
    pub generator: GenConfig,
    pub protocol: ForgetProtocol,
    pub scorer: ScorerSettings,
    pub train: TrainConfig,
    pub unlearn: UnlearnConfig,
    pub baseline: BaselineConfig,
    pub sweep: SweepConfig,
}

/// Defaults are the reference experiment: 100 queries with 20 documents
/// each (1:19), a BiEncoder teacher and Forget-10 %.
impl Default for ExperimentConfig {
    fn default() -> Self {
        let seed = 42;
        Self {
            seed: None,
            precision: Precision::F64,
            paths: Paths::default(),
            generator: GenConfig {
                n_queries: 100,
                docs_per_query: 20,
                pos_per_query: 1,
                neg_ratio: 19,
                d_feat: 128,
                n_topics: 10,
                noise_sigma: 0.5,
                test_fraction: 0.2,
                seed,
            },
            protocol: ForgetProtocol { fraction: 0.10, balance: 0.5, seed },
            scorer: ScorerSettings::default(),
            train: TrainConfig { epochs: 30, lr: 0.05, seed, ..Default::default() },
            unlearn: UnlearnConfig { k: 5, gamma: 0.0, epochs: 20, lr: 0.3, seed, ..Default::default() },
            baseline: BaselineConfig { epochs: 30, lr: 0.05, seed, ..Default::default() },
            sweep: SweepConfig::default(),
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (if any) over the defaults, applies `--set` overrides
    /// and the seed override, and validates the result.
    pub fn load(path: Option<&Path>, sets: &[String], seed: Option<u64>) -> Result<Self, HarnessError> {
        let mut value = serde_json::to_value(Self::default()).expect("defaults serialise");
        if let Some(path) = path {
            let text =
                std::fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            let file: Value =
                serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
            merge(&mut value, file);
        }
        for s in sets {
            apply_set(&mut value, s)?;
        }
        let mut cfg: Self = serde_json::from_value(value).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(s) = seed {
            cfg.seed = Some(s);
        }
        cfg.apply_seed();
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply_seed(&mut self) {
        if let Some(s) = self.seed {
            self.generator.seed = s;
            self.protocol.seed = s;
            self.train.seed = s;
            self.unlearn.seed = s;
            self.baseline.seed = s;
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let c = |r: unrank_core::Result<()>| r.map_err(|e| HarnessError::Config(e.to_string()));
        c(self.generator.validate())?;
        c(self.protocol.validate())?;
        c(self.train.validate())?;
        c(self.unlearn.validate())?;
        c(self.baseline.validate())?;
        if self.scorer.hidden == 0 {
            return Err(HarnessError::Config("scorer.hidden must be >= 1".into()));
        }
        if self.paths.run_id.is_empty() || self.paths.run_id.contains(['/', '\\']) {
            return Err(HarnessError::Config(format!("invalid run_id `{}`", self.paths.run_id)));
        }
        let s = &self.sweep;
        if s.k.is_empty() || s.gamma.is_empty() || s.fraction.is_empty() || s.methods.is_empty() {
            return Err(HarnessError::Config("sweep grids must be non-empty".into()));
        }
        if s.repeats == 0 || s.epoch_unit == 0 {
            return Err(HarnessError::Config("sweep.repeats and sweep.epoch_unit must be >= 1".into()));
        }
        Ok(())
    }

    pub fn shape(&self, input_dim: usize) -> ScorerShape {
        ScorerShape::new(self.scorer.kind, input_dim, self.scorer.hidden)
    }

    pub fn run_dir(&self) -> PathBuf {
        self.paths.out_dir.join(&self.paths.run_id)
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Applies `a.b.c=value`. The value is parsed as JSON and falls back to a
/// plain string, so `--set paths.run_id=x` and `--set sweep.k=[2,15]` both work.
fn apply_set(root: &mut Value, assignment: &str) -> Result<(), HarnessError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("--set expects key=value, got `{assignment}`")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut slot = root;
    for part in key.split('.') {
        let obj = slot
            .as_object_mut()
            .ok_or_else(|| HarnessError::Config(format!("`{key}`: `{part}` is not inside an object")))?;
        slot = obj.get_mut(part).ok_or_else(|| HarnessError::Config(format!("unknown config key `{key}`")))?;
    }
    *slot = value;
    Ok(())
}
