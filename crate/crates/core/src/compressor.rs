//! Uniform dispatch over every compressor, for the training harness, the
//! benchmark harness, and the CLI.
//!
//! A [`CompressorConfig`] is the declarative description (name + ratio +
//! tuning knobs); a [`Compressor`] is a runtime instance that may carry
//! state across calls (the multi-stage estimators adapt their stage count).
//! Each worker owns its own instance.
//!
//! Every ratio-driven compressor treats `delta = 1` as "no compression":
//! all nonzero elements pass through.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::sidco::{Flavor, SidcoConfig, SidcoEstimator};
use crate::sparsify::{self, apply_threshold, k_from_ratio, CompressionStats, SparseGradient};
use crate::{Error, Result};

/// Compressor selector. String forms (CLI and config files):
/// `none`, `topk`, `randk`, `quantile`, `dgc`, `gaussian`, `sidco-e`,
/// `sidco-gp`, `sidco-p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CompressorName {
    /// Identity: every nonzero element passes through.
    None,
    /// Exact Top-k selection.
    Topk,
    /// Uniform random support of size k.
    Randk,
    /// Threshold at the exact empirical (1-delta)-quantile.
    Quantile,
    /// Sampled-threshold Top-k (DGC-style).
    Dgc,
    /// Single-stage Gaussian fit baseline.
    Gaussian,
    /// Multi-stage exponential.
    SidcoE,
    /// Gamma first stage, generalized Pareto afterwards.
    SidcoGp,
    /// Generalized Pareto at every stage.
    SidcoP,
}

pub const COMPRESSOR_NAMES: [&str; 9] = [
    "none", "topk", "randk", "quantile", "dgc", "gaussian", "sidco-e", "sidco-gp", "sidco-p",
];

impl CompressorName {
    pub fn as_str(&self) -> &'static str {
        match self {
            CompressorName::None => "none",
            CompressorName::Topk => "topk",
            CompressorName::Randk => "randk",
            CompressorName::Quantile => "quantile",
            CompressorName::Dgc => "dgc",
            CompressorName::Gaussian => "gaussian",
            CompressorName::SidcoE => "sidco-e",
            CompressorName::SidcoGp => "sidco-gp",
            CompressorName::SidcoP => "sidco-p",
        }
    }

    pub fn flavor(&self) -> Option<Flavor> {
        match self {
            CompressorName::SidcoE => Some(Flavor::Exponential),
            CompressorName::SidcoGp => Some(Flavor::GammaGpd),
            CompressorName::SidcoP => Some(Flavor::Gpd),
            _ => None,
        }
    }
}

impl FromStr for CompressorName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(CompressorName::None),
            "topk" => Ok(CompressorName::Topk),
            "randk" => Ok(CompressorName::Randk),
            "quantile" => Ok(CompressorName::Quantile),
            "dgc" => Ok(CompressorName::Dgc),
            "gaussian" => Ok(CompressorName::Gaussian),
            "sidco-e" => Ok(CompressorName::SidcoE),
            "sidco-gp" => Ok(CompressorName::SidcoGp),
            "sidco-p" => Ok(CompressorName::SidcoP),
            other => Err(Error::Config(format!(
                "unknown compressor {other:?}; valid names: {}",
                COMPRESSOR_NAMES.join(", ")
            ))),
        }
    }
}

impl std::fmt::Display for CompressorName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

fn default_delta() -> f64 {
    1.0
}

fn default_sample_fraction() -> f64 {
    0.01
}

fn default_delta1() -> f64 {
    0.25
}

fn default_eps() -> f64 {
    0.2
}

fn default_q() -> u32 {
    5
}

fn default_m_max() -> u32 {
    10
}

/// Declarative compressor description, as found in run configuration files.
///
/// `delta` is the target compression ratio in `(0, 1]`. The remaining
/// fields only apply to the compressors that read them (`sample_fraction`
/// for `dgc`; `delta1`, `eps_h`, `eps_l`, `q`, `m_max` for the `sidco-*`
/// family).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompressorConfig {
    pub name: CompressorName,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_sample_fraction")]
    pub sample_fraction: f64,
    #[serde(default = "default_delta1")]
    pub delta1: f64,
    #[serde(default = "default_eps")]
    pub eps_h: f64,
    #[serde(default = "default_eps")]
    pub eps_l: f64,
    #[serde(default = "default_q")]
    pub q: u32,
    #[serde(default = "default_m_max")]
    pub m_max: u32,
}

impl CompressorConfig {
    /// A compressor at its documented defaults.
    pub fn new(name: CompressorName, delta: f64) -> Self {
        Self {
            name,
            delta,
            sample_fraction: default_sample_fraction(),
            delta1: default_delta1(),
            eps_h: default_eps(),
            eps_l: default_eps(),
            q: default_q(),
            m_max: default_m_max(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.name == CompressorName::None {
            return Ok(());
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            problems.push(format!("delta {} outside (0, 1]", self.delta));
        }
        if self.name == CompressorName::Dgc
            && !(self.sample_fraction > 0.0 && self.sample_fraction <= 1.0)
        {
            problems.push(format!(
                "sample_fraction {} outside (0, 1]",
                self.sample_fraction
            ));
        }
        if self.name.flavor().is_some() && self.delta < 1.0 {
            if let Err(Error::Config(msg)) = self.sidco_config().expect("flavor").validate() {
                problems.push(msg);
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }

    fn sidco_config(&self) -> Option<SidcoConfig> {
        self.name.flavor().map(|flavor| SidcoConfig {
            delta: self.delta,
            delta1: self.delta1,
            eps_h: self.eps_h,
            eps_l: self.eps_l,
            q: self.q,
            m_max: self.m_max,
            flavor,
        })
    }
}

/// A runtime compressor instance. Owns any multi-stage estimator state;
/// single-owner, one instance per worker.
#[derive(Debug, Clone)]
pub struct Compressor {
    config: CompressorConfig,
    estimator: Option<SidcoEstimator>,
}

impl Compressor {
    pub fn from_config(config: &CompressorConfig) -> Result<Self> {
        config.validate()?;
        let estimator = match config.sidco_config() {
            Some(sc) if config.delta < 1.0 => Some(SidcoEstimator::new(sc)?),
            _ => None,
        };
        Ok(Self {
            config: *config,
            estimator,
        })
    }

    pub fn name(&self) -> CompressorName {
        self.config.name
    }

    /// Current stage count of a multi-stage estimator, if this is one.
    pub fn stages(&self) -> Option<u32> {
        self.estimator.as_ref().map(|e| e.stages())
    }

    /// Compresses one gradient. `seed` feeds the randomized compressors
    /// (`randk`, `dgc`); the rest ignore it.
    pub fn compress(
        &mut self,
        grad: &[f64],
        seed: u64,
    ) -> Result<(SparseGradient, CompressionStats)> {
        let cfg = self.config;
        if cfg.name == CompressorName::None
            || (cfg.delta == 1.0 && cfg.name != CompressorName::Randk)
        {
            let (sparse, mut stats) = apply_threshold(grad, 0.0);
            stats.k_target = grad.len();
            return Ok((sparse, stats));
        }
        let k = k_from_ratio(cfg.delta, grad.len());
        match cfg.name {
            CompressorName::None => unreachable!("handled above"),
            CompressorName::Topk => sparsify::topk_exact(grad, k),
            CompressorName::Randk => {
                let start = std::time::Instant::now();
                let sparse = sparsify::randk(grad, k, seed)?;
                let stats = CompressionStats {
                    k_target: k,
                    k_hat: sparse.nnz(),
                    threshold: 0.0,
                    elapsed: start.elapsed(),
                };
                Ok((sparse, stats))
            }
            CompressorName::Quantile => sparsify::quantile_threshold(grad, cfg.delta),
            CompressorName::Dgc => {
                sparsify::dgc_estimate(grad, cfg.delta, cfg.sample_fraction, seed)
            }
            CompressorName::Gaussian => sparsify::gaussian_estimate(grad, cfg.delta),
            CompressorName::SidcoE | CompressorName::SidcoGp | CompressorName::SidcoP => self
                .estimator
                .as_mut()
                .expect("sidco estimator initialized in from_config")
                .compress(grad),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SynthLaw};

    fn laplace(d: usize, seed: u64) -> Vec<f64> {
        generate(SynthLaw::Laplace { scale: 1.0 }, d, seed).unwrap()
    }

    #[test]
    fn name_round_trip() {
        for name in COMPRESSOR_NAMES {
            let parsed: CompressorName = name.parse().unwrap();
            assert_eq!(parsed.as_str(), name);
        }
        let err = "nope".parse::<CompressorName>().unwrap_err();
        assert!(err.to_string().contains("sidco-e"), "{err}");
    }

    #[test]
    fn every_compressor_runs_and_respects_target() {
        let g = laplace(20_000, 1);
        let delta = 0.01;
        let k = k_from_ratio(delta, g.len());
        for name in COMPRESSOR_NAMES {
            let parsed: CompressorName = name.parse().unwrap();
            let cfg = CompressorConfig::new(parsed, delta);
            let mut c = Compressor::from_config(&cfg).unwrap();
            let (sparse, stats) = c.compress(&g, 7).unwrap();
            assert_eq!(sparse.nnz(), stats.k_hat, "{name}");
            match parsed {
                CompressorName::None => assert_eq!(stats.k_hat, g.len()),
                CompressorName::Topk | CompressorName::Randk => assert_eq!(stats.k_hat, k),
                // Estimator-based compressors land near the target on
                // model-matched data; loose sanity band only.
                _ => assert!(
                    stats.k_hat > 0 && stats.k_hat < g.len() / 10,
                    "{name}: k_hat = {}",
                    stats.k_hat
                ),
            }
        }
    }

    #[test]
    fn delta_one_degenerates_to_identity() {
        let g = laplace(1000, 2);
        for name in ["topk", "quantile", "dgc", "gaussian", "sidco-e"] {
            let cfg = CompressorConfig::new(name.parse().unwrap(), 1.0);
            let mut c = Compressor::from_config(&cfg).unwrap();
            let (sparse, _) = c.compress(&g, 3).unwrap();
            assert_eq!(sparse.densify(), g, "{name}");
        }
    }

    #[test]
    fn sidco_state_persists_across_calls() {
        let cfg = CompressorConfig::new(CompressorName::SidcoGp, 0.001);
        let mut c = Compressor::from_config(&cfg).unwrap();
        let g = generate(
            SynthLaw::Gamma {
                shape: 0.8,
                scale: 1.0,
            },
            100_000,
            5,
        )
        .unwrap();
        assert_eq!(c.stages(), Some(1));
        for _ in 0..10 {
            c.compress(&g, 0).unwrap();
        }
        assert!(c.stages().unwrap() >= 2, "adaptation should have engaged");
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = CompressorConfig::new(CompressorName::Topk, 0.0);
        assert!(Compressor::from_config(&cfg).is_err());
        cfg = CompressorConfig::new(CompressorName::Dgc, 0.1);
        cfg.sample_fraction = 0.0;
        assert!(Compressor::from_config(&cfg).is_err());
        cfg = CompressorConfig::new(CompressorName::SidcoE, 0.1);
        cfg.q = 0;
        assert!(Compressor::from_config(&cfg).is_err());
    }
}
