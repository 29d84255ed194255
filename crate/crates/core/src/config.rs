//! Run configuration: one JSON document holding every knob of the pipeline.
//!
//! Unknown keys are rejected. Missing keys take the `full` defaults, so a
//! file only needs the fields it changes. Named presets cover the default
//! configuration, the acceptance-scale `desk` run and a `small` smoke-test
//! setup.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetConfig;
use crate::error::{Error, Result};
use crate::eval::HISTOGRAM_BINS;
use crate::model::{LossFlags, ModelConfig, TrainConfig};

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "MERR_OUTPUT_DIR";

/// Published JSON schema for [`RunConfig`].
pub const SCHEMA: &str = include_str!("../schema/run_config.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub n_test: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            n_test: 1000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub n_bins: usize,
    /// Index into the test set of the sample used for per-sample figures.
    pub sample_index: usize,
    pub mc_passes: usize,
    pub mc_seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            n_bins: HISTOGRAM_BINS,
            sample_index: 0,
            mc_passes: 2000,
            mc_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub flags: LossFlags,
    pub eval: EvalConfig,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            flags: LossFlags::CASE1,
            eval: EvalConfig::default(),
            output_dir: PathBuf::from("runs/full"),
        }
    }
}

pub const PRESETS: [&str; 3] = ["full", "desk", "small"];

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let full = Self::default();
        match name {
            "full" => Ok(full),
            // 2,000 samples, 1,800/200 split, narrower super branch, 60 epochs
            "desk" => Ok(Self {
                dataset: DatasetConfig {
                    count: 2000,
                    ..full.dataset
                },
                split: SplitConfig {
                    n_test: 200,
                    seed: 0,
                },
                model: ModelConfig {
                    hidden_super: 512,
                    ..full.model
                },
                train: TrainConfig {
                    max_epochs: 60,
                    epoch_subsample: 1800,
                    ..full.train
                },
                output_dir: PathBuf::from("runs/desk"),
                ..full
            }),
            "small" => Ok(Self {
                dataset: DatasetConfig {
                    q4_grid: [4, 8],
                    q8_grid: [8, 16],
                    count: 48,
                    ..full.dataset
                },
                split: SplitConfig { n_test: 8, seed: 0 },
                model: ModelConfig {
                    hidden_error: 24,
                    hidden_super: 16,
                    ..full.model
                },
                train: TrainConfig {
                    max_epochs: 4,
                    epoch_subsample: 40,
                    batch_size: 8,
                    ..full.train
                },
                eval: EvalConfig {
                    mc_passes: 64,
                    ..full.eval
                },
                output_dir: PathBuf::from("runs/small"),
                ..full
            }),
            other => Err(Error::Config(format!(
                "unknown preset {other:?}; expected one of {}",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.dataset.validate()?;
        self.model.validate()?;
        self.train.validate().map_err(as_config)?;
        if self.split.n_test == 0 || self.split.n_test >= self.dataset.count {
            return Err(Error::Config(format!(
                "split.n_test must lie in [1, dataset.count), got {} of {}",
                self.split.n_test, self.dataset.count
            )));
        }
        if self.eval.n_bins < 2 || self.eval.mc_passes < 2 {
            return Err(Error::Config(
                "eval.n_bins and eval.mc_passes must be at least 2".into(),
            ));
        }
        if self.eval.sample_index >= self.split.n_test {
            return Err(Error::Config(format!(
                "eval.sample_index {} outside the {} test samples",
                self.eval.sample_index, self.split.n_test
            )));
        }
        Ok(())
    }

    /// Sets every seed in the configuration.
    pub fn set_seed(&mut self, seed: u64) {
        self.dataset.seed = seed;
        self.split.seed = seed;
        self.train.seed = seed;
        self.eval.mc_seed = seed;
    }

    /// Applies the output-directory environment override, if set.
    pub fn apply_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            self.output_dir = PathBuf::from(dir);
        }
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}
