//! TOML run configuration for the command-line tool.
//!
//! One file drives both the training harness (`[train]`) and the latency
//! benchmark (`[bench]`). The schema is strict: unknown keys are rejected,
//! missing required keys are reported by name, and semantic violations are
//! collected exhaustively rather than failing on the first.
//!
//! A single top-level `seed` determines every stochastic output of a run
//! (dataset synthesis keeps its own sub-seed key so the same data can be
//! reused across otherwise different runs, but that key is part of the file
//! and defaults to 0).
//!
//! ```toml
//! seed = 7
//! out = "out"
//!
//! [train]
//! learning_rate = 0.3
//! iterations = 500
//! model = "logistic"
//!
//! [train.dataset]
//! kind = "logistic"
//! n_samples = 4096
//! n_features = 200
//! noise = 0.5
//!
//! [train.compressor]
//! name = "sidco-e"
//! delta = 0.01
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::BenchSpec;
use crate::compressor::{CompressorConfig, CompressorName};
use crate::sim::{DatasetConfig, ModelKind, TrainConfig};
use crate::{Error, Result};

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_workers() -> usize {
    8
}

fn default_batch_size() -> usize {
    32
}

fn default_hidden() -> usize {
    16
}

fn default_compressor() -> CompressorConfig {
    CompressorConfig::new(CompressorName::None, 1.0)
}

/// The `[train]` table. Learning rate, iteration count, model, and dataset
/// are required; everything else has the harness defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default = "default_workers")]
    pub workers: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub model: ModelKind,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    pub dataset: DatasetConfig,
    #[serde(default = "default_compressor")]
    pub compressor: CompressorConfig,
    #[serde(default)]
    pub warmup_iterations: usize,
    #[serde(default)]
    pub record_timing: bool,
    #[serde(default)]
    pub parallel: bool,
}

impl TrainSection {
    /// Binds the section to the run's global seed.
    pub fn to_train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            workers: self.workers,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            iterations: self.iterations,
            compressor: self.compressor,
            model: self.model,
            hidden: self.hidden,
            dataset: self.dataset,
            warmup_iterations: self.warmup_iterations,
            record_timing: self.record_timing,
            parallel: self.parallel,
            seed,
        }
    }
}

/// Whole-file schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; fully determines all stochastic outputs.
    #[serde(default)]
    pub seed: u64,
    /// Output directory for CSV and trace files.
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub train: Option<TrainSection>,
    #[serde(default)]
    pub bench: Option<BenchSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: default_out(),
            train: None,
            bench: None,
        }
    }
}

impl RunConfig {
    /// Parses TOML text. Schema errors (unknown or missing keys, type
    /// mismatches) surface with the offending key named.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("config schema: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Semantic validation across all present sections, collecting every
    /// violation into one error.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if let Some(train) = &self.train {
            if let Err(e) = train.to_train_config(self.seed).validate() {
                problems.push(format!("[train] {e}"));
            }
        }
        if let Some(bench) = &self.bench {
            if let Err(e) = bench.validate() {
                problems.push(format!("[bench] {e}"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    /// The training configuration, bound to the global seed.
    pub fn train_config(&self) -> Result<TrainConfig> {
        let section = self
            .train
            .as_ref()
            .ok_or_else(|| Error::Config("config has no [train] section".into()))?;
        Ok(section.to_train_config(self.seed))
    }

    /// The benchmark specification, bound to the global seed.
    pub fn bench_spec(&self) -> Result<BenchSpec> {
        let mut spec = self
            .bench
            .clone()
            .ok_or_else(|| Error::Config("config has no [bench] section".into()))?;
        spec.seed = self.seed;
        Ok(spec)
    }
}
