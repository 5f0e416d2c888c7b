//! Multi-stage threshold estimation with adaptive stage count.
//!
//! A single distribution fit over the whole gradient estimates the target
//! quantile poorly when the model only approximates the data. The
//! multi-stage estimator instead walks out into the tail: stage `m` fits its
//! family to the exceedance set above the previous stage's threshold
//! (shifted to the origin / anchored by a location parameter) and computes
//! the threshold for a per-stage ratio `delta_m`, with
//! `prod_m delta_m = delta`. By extreme value theory the exceedance law
//! approaches a generalized Pareto shape as the threshold grows, so the fits
//! improve stage over stage.
//!
//! Three flavors:
//! - `Exponential`: exponential fit at every stage (exceedances of an
//!   exponential above `eta` are exponential again, so stage thresholds are
//!   shift-additive);
//! - `GammaGpd`: gamma fit on the whole magnitude spectrum first, then
//!   generalized Pareto fits with the previous threshold as location;
//! - `Gpd`: generalized Pareto at every stage.
//!
//! The number of stages `M` adapts online: every `Q`-th call compares the
//! window-averaged achieved count against the target band
//! `[k (1 - eps_l), k (1 + eps_h)]` and steps `M` by at most one, clamped to
//! `[1, m_max]`. Overshoot (too many selected, threshold too low) removes a
//! stage; undershoot adds one.

use serde::{Deserialize, Serialize};

use crate::gradmodel;
use crate::sparsify::{apply_threshold, k_from_ratio, CompressionStats, SparseGradient};
use crate::{Error, Result};

/// Estimator flavor: which family is fitted at each stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flavor {
    Exponential,
    GammaGpd,
    Gpd,
}

impl Flavor {
    pub fn name(&self) -> &'static str {
        match self {
            Flavor::Exponential => "sidco-e",
            Flavor::GammaGpd => "sidco-gp",
            Flavor::Gpd => "sidco-p",
        }
    }
}

/// Estimator configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidcoConfig {
    /// Target compression ratio, in (0, 1).
    pub delta: f64,
    /// Per-stage ratio for all but the last stage, in (0, 1). With
    /// `delta >= delta1` the estimator degenerates to a single stage.
    pub delta1: f64,
    /// Upper tolerance: average overshoot beyond `k (1 + eps_h)` removes a
    /// stage.
    pub eps_h: f64,
    /// Lower tolerance: average undershoot below `k (1 - eps_l)` adds a
    /// stage.
    pub eps_l: f64,
    /// Adaptation window: stage adaptation runs on every `q`-th call.
    pub q: u32,
    /// Stage-count ceiling.
    pub m_max: u32,
    pub flavor: Flavor,
}

impl SidcoConfig {
    /// Defaults: `delta1 = 0.25`, `eps_h = eps_l = 0.2`, `q = 5`,
    /// `m_max = 10`.
    pub fn new(delta: f64, flavor: Flavor) -> Self {
        Self {
            delta,
            delta1: 0.25,
            eps_h: 0.2,
            eps_l: 0.2,
            q: 5,
            m_max: 10,
            flavor,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.delta > 0.0 && self.delta < 1.0) {
            problems.push(format!("delta {} outside (0, 1)", self.delta));
        }
        if !(self.delta1 > 0.0 && self.delta1 < 1.0) {
            problems.push(format!("delta1 {} outside (0, 1)", self.delta1));
        }
        if self.eps_h < 0.0 || self.eps_l < 0.0 {
            problems.push(format!(
                "tolerances must be nonnegative (eps_h {}, eps_l {})",
                self.eps_h, self.eps_l
            ));
        }
        if self.eps_h.max(self.eps_l) >= 1.0 {
            problems.push(format!(
                "max(eps_h, eps_l) = {} must stay below 1",
                self.eps_h.max(self.eps_l)
            ));
        }
        if self.q == 0 {
            problems.push("adaptation window q must be positive".into());
        }
        if self.m_max == 0 {
            problems.push("m_max must be positive".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Adaptive-stage controller state. Single-owner per worker.
#[derive(Debug, Clone, PartialEq)]
pub struct SidcoState {
    m: u32,
    k_hat_accum: u64,
    accum_count: u32,
    iter_in_window: u32,
    /// Set when the most recent call had to fall back to a previous stage's
    /// threshold because a later-stage fit failed.
    pub last_fallback: bool,
    /// Set when the most recent call reduced the stage count to keep every
    /// per-stage ratio inside (0, 1).
    pub last_schedule_clamped: bool,
}

impl SidcoState {
    /// Fresh state: single stage, empty window.
    pub fn new() -> Self {
        Self {
            m: 1,
            k_hat_accum: 0,
            accum_count: 0,
            iter_in_window: 0,
            last_fallback: false,
            last_schedule_clamped: false,
        }
    }

    /// Current stage count.
    pub fn stages(&self) -> u32 {
        self.m
    }
}

impl Default for SidcoState {
    fn default() -> Self {
        Self::new()
    }
}

/// Per-stage ratio schedule: `M - 1` stages at `delta1`, remainder last, so
/// the product is exactly `delta`.
///
/// An `m` too large for the target (`delta >= delta1^(m-1)`, which would
/// push the last ratio to 1 or above) is reduced until feasible; the
/// returned flag records that clamping. `m = 1` yields `[delta]`.
pub fn stage_schedule(delta: f64, delta1: f64, m: u32) -> (Vec<f64>, bool) {
    debug_assert!(delta > 0.0 && delta < 1.0);
    debug_assert!(delta1 > 0.0 && delta1 < 1.0);
    let mut m = m.max(1);
    let mut clamped = false;
    while m > 1 && delta >= delta1.powi(m as i32 - 1) {
        m -= 1;
        clamped = true;
    }
    if m == 1 {
        return (vec![delta], clamped);
    }
    let mut stages = vec![delta1; m as usize - 1];
    stages.push(delta / delta1.powi(m as i32 - 1));
    (stages, clamped)
}

/// One adaptation step: compares the windowed average achieved count
/// against the tolerance band around `k_target` and moves the stage count
/// by at most one, staying inside `[1, m_max]`.
pub fn adapt_stages(state: &mut SidcoState, config: &SidcoConfig, k_hat_avg: f64, k_target: usize) {
    let k = k_target as f64;
    if k_hat_avg > k * (1.0 + config.eps_h) {
        state.m = state.m.saturating_sub(1).max(1);
    } else if k_hat_avg < k * (1.0 - config.eps_l) {
        state.m = (state.m + 1).min(config.m_max);
    }
}

/// Multi-stage sparsification: estimates the threshold stage by stage, then
/// applies the final threshold to the *original* gradient.
///
/// Stage behavior per flavor is described at the module level. Per-stage
/// thresholds are nondecreasing by construction (each stage adds a
/// nonnegative excess over the previous threshold). A fit failure at stage
/// 1 propagates as an error; at any later stage the estimator falls back to
/// the previous stage's threshold and flags `state.last_fallback`
/// (compression must never abort a training step).
///
/// After compressing, the achieved count feeds the adaptation window: on
/// every `q`-th call the windowed mean is compared against the tolerance
/// band and the stage count adapts; on other calls the count is
/// accumulated. (The adaptation call's own count is not accumulated, so a
/// window averages `q - 1` samples.)
pub fn sidco_sparsify(
    grad: &[f64],
    config: &SidcoConfig,
    state: &mut SidcoState,
) -> Result<(SparseGradient, CompressionStats)> {
    let start = std::time::Instant::now();
    config.validate()?;
    if grad.is_empty() {
        return Err(Error::DegenerateInput("empty gradient vector".into()));
    }
    let d = grad.len();
    let k_target = k_from_ratio(config.delta, d);

    let (stages, clamped) = stage_schedule(config.delta, config.delta1, state.m);
    state.last_schedule_clamped = clamped;
    state.last_fallback = false;

    // The running exceedance set, as magnitudes. Stage m fits on the
    // elements that survived threshold eta_{m-1}. The buffer is materialized
    // lazily: the exponential flavor's first stage needs only the magnitude
    // mean, so its single-stage schedules never allocate anything but the
    // output (this is the latency-critical path).
    let mut exceedances: Vec<f64> = Vec::new();
    let mut materialized = false;
    let mut eta = 0.0_f64;

    for (stage, &delta_m) in stages.iter().enumerate() {
        let fit = if config.flavor == Flavor::Exponential {
            let (sum, n) = if materialized {
                (exceedances.iter().sum::<f64>(), exceedances.len())
            } else {
                (grad.iter().map(|v| v.abs()).sum::<f64>(), d)
            };
            exp_stage_threshold(sum / n as f64, n, eta, delta_m)
        } else {
            if !materialized {
                exceedances = grad.iter().map(|v| v.abs()).collect();
                materialized = true;
            }
            fit_stage(config.flavor, stage, &exceedances, eta, delta_m)
        };
        match fit {
            Ok(stage_eta) => {
                // Fits guarantee stage_eta >= eta analytically; the max
                // guards against rounding at the boundary.
                eta = stage_eta.max(eta);
            }
            Err(err) if stage == 0 => return Err(err),
            Err(_) => {
                state.last_fallback = true;
                break;
            }
        }
        if stage + 1 < stages.len() {
            if materialized {
                exceedances.retain(|v| *v >= eta);
            } else {
                exceedances = grad
                    .iter()
                    .filter_map(|v| {
                        let a = v.abs();
                        (a >= eta).then_some(a)
                    })
                    .collect();
                materialized = true;
            }
        }
    }

    let (sparse, mut stats) = apply_threshold(grad, eta.max(0.0));
    stats.k_target = k_target;
    stats.elapsed = start.elapsed();

    // Adaptation window bookkeeping (see doc comment for the cadence).
    if state.iter_in_window == config.q - 1 {
        if state.accum_count > 0 {
            let avg = state.k_hat_accum as f64 / state.accum_count as f64;
            adapt_stages(state, config, avg, k_target);
        }
        state.k_hat_accum = 0;
        state.accum_count = 0;
        state.iter_in_window = 0;
    } else {
        state.k_hat_accum += stats.k_hat as u64;
        state.accum_count += 1;
        state.iter_in_window += 1;
    }

    Ok((sparse, stats))
}

/// Exponential stage fit from precomputed moments. Exceedances of an
/// exponential above `eta_prev` are exponential after shifting back to the
/// origin, so each stage adds `beta_m ln(1/delta_m)` on top of the previous
/// threshold; the shifted scale is `mean - eta_prev` directly, with no
/// shifted copy of the data.
fn exp_stage_threshold(mean: f64, n: usize, eta_prev: f64, delta_m: f64) -> Result<f64> {
    if n < 2 {
        return Err(Error::DegenerateInput(format!(
            "exceedance set of {n} element(s) cannot support a fit"
        )));
    }
    let beta = mean - eta_prev;
    if beta <= 0.0 {
        return Err(Error::AllZeroInput);
    }
    Ok(eta_prev + beta * (1.0 / delta_m).ln())
}

/// Fits one stage and returns its absolute threshold.
///
/// `eta_prev` is the previous stage's threshold (0 for the first stage);
/// `exceedances` are the magnitudes that survived it. Requires at least 2
/// usable elements.
fn fit_stage(
    flavor: Flavor,
    stage: usize,
    exceedances: &[f64],
    eta_prev: f64,
    delta_m: f64,
) -> Result<f64> {
    if exceedances.len() < 2 {
        return Err(Error::DegenerateInput(format!(
            "exceedance set of {} element(s) cannot support a fit",
            exceedances.len()
        )));
    }
    match flavor {
        Flavor::Exponential => unreachable!("exponential stages go through exp_stage_threshold"),
        Flavor::GammaGpd if stage == 0 => {
            let params = gradmodel::estimate_gamma(exceedances)?;
            gradmodel::threshold_from_params(&params, delta_m)
        }
        Flavor::GammaGpd | Flavor::Gpd => {
            let (params, _clamped) = gradmodel::estimate_gpd(exceedances, eta_prev)?;
            gradmodel::threshold_from_params(&params, delta_m)
        }
    }
}

/// Convenience wrapper holding config + state together, used by the uniform
/// compressor dispatch.
#[derive(Debug, Clone)]
pub struct SidcoEstimator {
    pub config: SidcoConfig,
    pub state: SidcoState,
}

impl SidcoEstimator {
    pub fn new(config: SidcoConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            state: SidcoState::new(),
        })
    }

    pub fn compress(&mut self, grad: &[f64]) -> Result<(SparseGradient, CompressionStats)> {
        sidco_sparsify(grad, &self.config, &mut self.state)
    }

    pub fn stages(&self) -> u32 {
        self.state.stages()
    }
}
