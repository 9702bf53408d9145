//! Experiment configuration (JSON).
//!
//! Unknown keys are rejected at every level. A fully-resolved config, with
//! the output directory stripped, is what each run writes as
//! `manifest.json`, so a manifest is itself a valid config.

use std::path::{Path, PathBuf};

use gala_core::{LongTailProfile, LossKind, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const OUT_ENV: &str = "GALA_OUT";
pub const DEFAULT_OUT: &str = "gala-out";
/// Separation at which cross-entropy lands mid-range on the preset benchmark.
pub const PRESET_SEPARATION: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub groups: GroupThresholds,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Synthetic(SyntheticData),
    Csv(CsvData),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticData {
    pub num_classes: usize,
    pub max_count: usize,
    pub imbalance_factor: f64,
    pub dim: usize,
    pub separation: f64,
    #[serde(default = "default_test_per_class")]
    pub test_per_class: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_test_per_class() -> usize {
    gala_core::data::DEFAULT_TEST_PER_CLASS
}

impl SyntheticData {
    pub fn profile(&self) -> Result<LongTailProfile> {
        Ok(LongTailProfile::new(self.num_classes, self.max_count, self.imbalance_factor)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvData {
    pub train: PathBuf,
    pub test: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossName {
    CrossEntropy,
    Gala,
}

impl From<LossName> for LossKind {
    fn from(l: LossName) -> Self {
        match l {
            LossName::CrossEntropy => LossKind::CrossEntropy,
            LossName::Gala => LossKind::Gala,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSettings {
    pub loss: LossName,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub seed: u64,
    pub eps_floor: f64,
    pub use_bias: bool,
    pub tau: f64,
    pub init_scale: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            loss: LossName::Gala,
            epochs: d.epochs,
            batch_size: d.batch_size,
            base_lr: d.base_lr,
            momentum: d.momentum,
            seed: d.seed,
            eps_floor: d.eps_floor,
            use_bias: d.use_bias,
            tau: d.tau,
            init_scale: d.init_scale,
        }
    }
}

impl TrainSettings {
    pub fn to_core(&self) -> TrainConfig {
        TrainConfig {
            loss: self.loss.into(),
            epochs: self.epochs,
            batch_size: self.batch_size,
            base_lr: self.base_lr,
            momentum: self.momentum,
            seed: self.seed,
            eps_floor: self.eps_floor,
            use_bias: self.use_bias,
            tau: self.tau,
            init_scale: self.init_scale,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroupThresholds {
    /// Classes with more training samples than this are head classes.
    pub head_threshold: usize,
    /// Classes with fewer training samples than this are tail classes.
    pub tail_threshold: usize,
}

impl Default for GroupThresholds {
    fn default() -> Self {
        Self { head_threshold: 100, tail_threshold: 20 }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.train.to_core().validate()?;
        if self.groups.head_threshold <= self.groups.tail_threshold {
            return Err(Error::Config("head_threshold must exceed tail_threshold".into()));
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.profile()?;
            if s.dim < 2 {
                return Err(Error::Config("synthetic dim must be >= 2".into()));
            }
            if !(s.separation > 0.0) {
                return Err(Error::Config("synthetic separation must be positive".into()));
            }
        }
        Ok(())
    }

    /// Named built-in configurations.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "paper-analysis" => Ok(Self {
                data: DataSource::Synthetic(SyntheticData {
                    num_classes: 10,
                    max_count: 500,
                    imbalance_factor: 100.0,
                    dim: 16,
                    separation: PRESET_SEPARATION,
                    test_per_class: default_test_per_class(),
                    seed: 0,
                }),
                train: TrainSettings::default(),
                groups: GroupThresholds::default(),
                out: Some(PathBuf::from("runs/paper-analysis")),
            }),
            other => Err(Error::Config(format!("unknown preset {other:?} (available: paper-analysis)"))),
        }
    }

    /// `cli_out`, then `$GALA_OUT`, then the config's `out`, then
    /// [`DEFAULT_OUT`].
    pub fn resolve_out(&self, cli_out: Option<&Path>) -> PathBuf {
        resolve_out(cli_out, self.out.as_deref())
    }

    /// Resolved config as written to `manifest.json`.
    pub fn manifest(&self) -> Self {
        Self { out: None, ..self.clone() }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

pub fn resolve_out(cli_out: Option<&Path>, config_out: Option<&Path>) -> PathBuf {
    if let Some(p) = cli_out {
        return p.to_path_buf();
    }
    if let Some(p) = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()) {
        return PathBuf::from(p);
    }
    config_out.map_or_else(|| PathBuf::from(DEFAULT_OUT), Path::to_path_buf)
}
