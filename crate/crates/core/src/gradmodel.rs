//! Distribution parameter estimation, threshold formulas, and
//! compressibility diagnostics.
//!
//! All estimators consume magnitude vectors (`|g|`) and run in one or two
//! passes. Thresholds come from the fitted family's inverse CDF evaluated at
//! `1 - delta`, so that on model-matching data the expected fraction of
//! elements above the threshold is `delta`.
//!
//! All statistics are computed in 64-bit arithmetic regardless of the input
//! element width at the file boundary: variances of near-zero-mean data lose
//! too much precision in 32-bit.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_lr, ln_gamma};

use crate::{Error, Result};

/// Elements with magnitude below this are treated as exact zeros when a
/// logarithm or a positive support is required.
pub const ZERO_TOL: f64 = 1e-12;

/// Margin keeping the generalized Pareto shape strictly inside its validity
/// interval `(-0.5, 0.5)`.
pub const GPD_SHAPE_MARGIN: f64 = 1e-6;

/// A validated dense gradient vector.
///
/// Invariants: `dim >= 1` and every element finite. Construction is the only
/// validation point; the numeric routines in this crate accept plain slices
/// and document their own preconditions.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGradient {
    values: Vec<f64>,
}

impl DenseGradient {
    /// Validates finiteness and non-emptiness.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::DegenerateInput("empty gradient vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

/// Fitted parameters of one sparsity-inducing distribution (plus the
/// Gaussian used by the single-stage baseline).
///
/// The three SPD families model gradient *magnitudes*; the symmetric
/// two-sided laws they induce on signed gradients share the same magnitude
/// thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DistributionParams {
    /// `|g| ~ Exp(scale)`, i.e. signed gradients are double exponential
    /// (Laplace).
    Exponential { scale: f64 },
    /// `|g| ~ Gamma(shape, scale)`.
    Gamma { shape: f64, scale: f64 },
    /// `|g| - location ~ GPD(shape, scale)`; the location is the previous
    /// peak-over-threshold stage's threshold (0 for a first stage).
    GeneralizedPareto {
        shape: f64,
        scale: f64,
        location: f64,
    },
    /// Signed gradients `~ N(mean, stddev)`; thresholds are quantiles of the
    /// folded (absolute-value) law.
    Gaussian { mean: f64, stddev: f64 },
}

impl DistributionParams {
    fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::DegenerateInput(msg));
        match *self {
            DistributionParams::Exponential { scale } => {
                if scale <= 0.0 || !scale.is_finite() {
                    return bad(format!("exponential scale {scale} must be positive"));
                }
            }
            DistributionParams::Gamma { shape, scale } => {
                if shape <= 0.0 || scale <= 0.0 || !shape.is_finite() || !scale.is_finite() {
                    return bad(format!(
                        "gamma shape {shape} / scale {scale} must be positive"
                    ));
                }
            }
            DistributionParams::GeneralizedPareto {
                shape,
                scale,
                location,
            } => {
                if shape <= -0.5 || shape >= 0.5 || shape.is_nan() {
                    return bad(format!("GPD shape {shape} outside (-0.5, 0.5)"));
                }
                if scale <= 0.0 || !scale.is_finite() {
                    return bad(format!("GPD scale {scale} must be positive"));
                }
                if location < 0.0 || !location.is_finite() {
                    return bad(format!("GPD location {location} must be nonnegative"));
                }
            }
            DistributionParams::Gaussian { mean, stddev } => {
                if stddev <= 0.0 || !stddev.is_finite() || !mean.is_finite() {
                    return bad(format!("gaussian stddev {stddev} must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Result of the power-law compressibility diagnostic.
///
/// The sorted magnitudes of a compressible vector decay like
/// `c1 * j^(-p)` with `p > 0.5`; the report carries the log-log least-squares
/// fit over the head of the sorted spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressibilityReport {
    /// Fitted decay exponent `p` (`+inf` by convention on all-zero input).
    pub decay_exponent: f64,
    /// Fitted prefactor `c1`.
    pub prefactor: f64,
    /// RMS residual of the log-log regression.
    pub fit_residual: f64,
    /// `decay_exponent > 0.5`.
    pub is_compressible: bool,
    /// Set when the input could not support a meaningful fit (fewer than two
    /// head entries above [`ZERO_TOL`]); the conventional values above apply.
    pub degenerate: bool,
}

/// Sparsification error `sigma_k = l2norm(g - T_k(g))` over a grid of `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparsificationErrorCurve {
    pub ks: Vec<usize>,
    pub errors: Vec<f64>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Fits `|g| ~ Exp(beta)` by the sample mean: `beta = mean(|g|)`.
///
/// Precondition: `abs` nonempty, elements nonnegative and finite.
pub fn estimate_exponential(abs: &[f64]) -> Result<DistributionParams> {
    if abs.is_empty() {
        return Err(Error::DegenerateInput("empty input".into()));
    }
    let scale = mean(abs);
    if scale <= 0.0 {
        return Err(Error::AllZeroInput);
    }
    Ok(DistributionParams::Exponential { scale })
}

/// Fits `|g| ~ Gamma(alpha, beta)` by the closed-form shape approximation
///
/// ```text
/// s     = ln(mean) - mean(ln)
/// alpha = (3 - s + sqrt((s - 3)^2 + 24 s)) / (12 s)
/// beta  = mean / alpha
/// ```
///
/// Elements below [`ZERO_TOL`] are excluded from both moments (the fit
/// describes the strictly positive part of the magnitude spectrum; `ln 0` is
/// undefined and sparse gradients contain exact zeros after prior
/// compression). Degenerate when more than half the elements are excluded,
/// fewer than 2 remain, or `s <= 0` within floating tolerance (constant
/// input: `ln(mean) == mean(ln)`).
pub fn estimate_gamma(abs: &[f64]) -> Result<DistributionParams> {
    const S_TOL: f64 = 1e-9;
    let kept: Vec<f64> = abs.iter().copied().filter(|v| *v >= ZERO_TOL).collect();
    if kept.len() * 2 < abs.len() {
        return Err(Error::DegenerateInput(format!(
            "{} of {} elements are zero-class; gamma fit needs a majority of positive values",
            abs.len() - kept.len(),
            abs.len()
        )));
    }
    if kept.len() < 2 {
        return Err(Error::DegenerateInput(
            "fewer than 2 strictly positive elements".into(),
        ));
    }
    let mu = mean(&kept);
    let log_mean = kept.iter().map(|v| v.ln()).sum::<f64>() / kept.len() as f64;
    let s = mu.ln() - log_mean;
    if s.is_nan() || s <= S_TOL {
        return Err(Error::DegenerateInput(format!(
            "log-moment gap s = {s:.3e} is not positive; input too close to constant"
        )));
    }
    let shape = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    Ok(DistributionParams::Gamma {
        shape,
        scale: mu / shape,
    })
}

/// Fits `|g| - location ~ GPD(alpha, beta)` by moment matching on the
/// shifted exceedances:
///
/// ```text
/// r     = mean^2 / var        (on values - location)
/// alpha = (1 - r) / 2
/// beta  = mean (r + 1) / 2
/// ```
///
/// The shape is clamped into `(-0.5 + tau, 0.5 - tau)`; the returned flag
/// records whether clamping occurred (fitting noise crosses the boundary
/// transiently; hard-failing would abort otherwise healthy runs).
pub fn estimate_gpd(abs: &[f64], location: f64) -> Result<(DistributionParams, bool)> {
    if abs.len() < 2 {
        return Err(Error::DegenerateInput(
            "GPD moment fit needs at least 2 elements".into(),
        ));
    }
    if abs.iter().any(|v| *v < location) {
        return Err(Error::DegenerateInput(format!(
            "value below the location parameter {location}; not an exceedance set"
        )));
    }
    let n = abs.len() as f64;
    let mu = abs.iter().map(|v| v - location).sum::<f64>() / n;
    let var = abs
        .iter()
        .map(|v| {
            let x = v - location - mu;
            x * x
        })
        .sum::<f64>()
        / (n - 1.0);
    if var <= 0.0 {
        return Err(Error::DegenerateInput("zero variance in GPD fit".into()));
    }
    if mu <= 0.0 {
        return Err(Error::DegenerateInput(
            "non-positive mean exceedance in GPD fit".into(),
        ));
    }
    let r = mu * mu / var;
    let raw_shape = 0.5 * (1.0 - r);
    let lo = -0.5 + GPD_SHAPE_MARGIN;
    let hi = 0.5 - GPD_SHAPE_MARGIN;
    let shape = raw_shape.clamp(lo, hi);
    let clamped = shape != raw_shape;
    Ok((
        DistributionParams::GeneralizedPareto {
            shape,
            scale: 0.5 * mu * (r + 1.0),
            location,
        },
        clamped,
    ))
}

/// Fits `g ~ N(mu, sigma)` on the raw (signed) values by sample mean and
/// sample standard deviation. Degenerate on zero variance or fewer than 2
/// elements.
pub fn estimate_gaussian(values: &[f64]) -> Result<DistributionParams> {
    if values.len() < 2 {
        return Err(Error::DegenerateInput(
            "gaussian fit needs at least 2 elements".into(),
        ));
    }
    let n = values.len() as f64;
    let mu = mean(values);
    let var = values
        .iter()
        .map(|v| {
            let x = v - mu;
            x * x
        })
        .sum::<f64>()
        / (n - 1.0);
    if var <= 0.0 {
        return Err(Error::DegenerateInput(
            "zero variance in gaussian fit".into(),
        ));
    }
    Ok(DistributionParams::Gaussian {
        mean: mu,
        stddev: var.sqrt(),
    })
}

/// Threshold `eta` such that the fitted family assigns probability `delta`
/// to magnitudes above `eta`.
///
/// Per-family closed forms:
/// - exponential: `eta = beta ln(1/delta)`
/// - gamma: `eta = -beta (ln delta + ln Gamma(alpha))`, clamped at 0 (the
///   approximation can cross zero once `ln Gamma(alpha) > ln(1/delta)`, i.e.
///   deep in the keep-everything regime)
/// - generalized Pareto: `eta = (beta/alpha) (exp(-alpha ln delta) - 1) + location`,
///   continuous at `alpha -> 0` where it reduces to the exponential form
/// - gaussian: quantile of `|N(mu, sigma)|` at `1 - delta` by bisection on
///   the folded CDF
///
/// `eta` is strictly decreasing in `delta` (up to the gamma clamp) and
/// nonnegative; for the GPD it never falls below the location.
pub fn threshold_from_params(params: &DistributionParams, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::UnsupportedRatio(delta));
    }
    params.validate()?;
    let eta = match *params {
        DistributionParams::Exponential { scale } => scale * (1.0 / delta).ln(),
        DistributionParams::Gamma { shape, scale } => {
            (-scale * (delta.ln() + ln_gamma(shape))).max(0.0)
        }
        DistributionParams::GeneralizedPareto {
            shape,
            scale,
            location,
        } => {
            let rel = if shape.abs() < 1e-12 {
                scale * (1.0 / delta).ln()
            } else {
                scale / shape * (-shape * delta.ln()).exp_m1()
            };
            location + rel
        }
        DistributionParams::Gaussian { mean, stddev } => {
            stddev * folded_normal_std_quantile(mean.abs() / stddev, 1.0 - delta)?
        }
    };
    Ok(eta)
}

/// Quantile `u` of `|N(m, 1)|` at probability `q`, by bisection on
/// `F(u) = Phi(u - m) - Phi(-u - m)`.
///
/// Solving on the standardized scale keeps the caller's `sigma * u` result
/// scale-equivariant to the bisection tolerance.
fn folded_normal_std_quantile(m: f64, q: f64) -> Result<f64> {
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let cdf = |u: f64| std_normal.cdf(u - m) - std_normal.cdf(-u - m);
    let mut lo = 0.0;
    let mut hi = m + 10.0;
    let mut grow = 0;
    while cdf(hi) < q {
        hi *= 2.0;
        grow += 1;
        if grow > 60 {
            return Err(Error::NonConvergence(format!(
                "folded normal bracket failed at q = {q}"
            )));
        }
    }
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if cdf(mid) < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Exact gamma threshold by bisection on the regularized lower incomplete
/// gamma function: solves `P(alpha, x) = 1 - delta`, returns `beta * x`.
///
/// Test oracle for the closed-form approximation in
/// [`threshold_from_params`]; the runtime path deliberately uses the
/// approximation (one `ln Gamma` versus an iterative inversion). Bracket is
/// `[0, alpha + 50 max(1, alpha)]`, tolerance `1e-10` on the standardized
/// threshold.
pub fn gamma_threshold_exact_oracle(shape: f64, scale: f64, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::UnsupportedRatio(delta));
    }
    DistributionParams::Gamma { shape, scale }.validate()?;
    let target = 1.0 - delta;
    let mut lo = 0.0_f64;
    let mut hi = shape + 50.0 * shape.max(1.0);
    if gamma_lr(shape, hi) < target {
        return Err(Error::NonConvergence(format!(
            "gamma inverse bracket [0, {hi}] does not cover 1 - delta = {target}"
        )));
    }
    while hi - lo > 1e-10 {
        let mid = 0.5 * (lo + hi);
        let p = if mid > 0.0 { gamma_lr(shape, mid) } else { 0.0 };
        if p < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(scale * 0.5 * (lo + hi))
}

/// Log-log least-squares power-law fit over the head of the sorted
/// magnitude spectrum.
///
/// The head is the first `min(ceil(head_fraction * d), 10^4, d/2)` sorted
/// entries (at least 2), excluding entries below [`ZERO_TOL`]: the tail of
/// near-zero values is numerically meaningless in log space. All-zero input
/// reports `p = +inf`, `is_compressible = true`, and sets the degenerate
/// flag. Intended for `d >= 10`.
pub fn compressibility_check(grad: &[f64], head_fraction: f64) -> CompressibilityReport {
    let d = grad.len();
    let degenerate_report = CompressibilityReport {
        decay_exponent: f64::INFINITY,
        prefactor: 0.0,
        fit_residual: 0.0,
        is_compressible: true,
        degenerate: true,
    };
    if d == 0 {
        return degenerate_report;
    }
    let head_fraction = head_fraction.clamp(0.0, 1.0);
    let head = ((head_fraction * d as f64).ceil() as usize)
        .min(10_000)
        .min(d / 2)
        .max(2)
        .min(d);

    let mut mags: Vec<f64> = grad.iter().map(|v| v.abs()).collect();
    if head < d {
        mags.select_nth_unstable_by(head - 1, |a, b| b.total_cmp(a));
        mags.truncate(head);
    }
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    // (ln j, ln |g|_(j)) pairs, 1-indexed rank.
    let points: Vec<(f64, f64)> = mags
        .iter()
        .enumerate()
        .filter(|(_, v)| **v >= ZERO_TOL)
        .map(|(i, v)| (((i + 1) as f64).ln(), v.ln()))
        .collect();
    if points.len() < 2 {
        return degenerate_report;
    }

    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - (intercept + slope * p.0)).powi(2))
        .sum();
    let p = -slope;
    CompressibilityReport {
        decay_exponent: p,
        prefactor: intercept.exp(),
        fit_residual: (rss / n).sqrt(),
        is_compressible: p > 0.5,
        degenerate: false,
    }
}

/// Magnitude-descending index order with ties broken by lower index.
///
/// This is the single tie rule shared by Top-k selection, threshold
/// truncation, and the sparsification-error curve, so oracle comparisons are
/// exact.
pub(crate) fn magnitude_order(grad: &[f64]) -> impl Fn(&usize, &usize) -> std::cmp::Ordering + '_ {
    move |a: &usize, b: &usize| {
        grad[*b]
            .abs()
            .total_cmp(&grad[*a].abs())
            .then_with(|| a.cmp(b))
    }
}

/// Sparsification errors `sigma_k = l2norm(g - T_k(g))` for each requested
/// `k`.
///
/// `ks` must be sorted ascending with every value in `[1, d]`. The dropped
/// squares are accumulated in ascending index order, which makes the result
/// bitwise-identical to the brute-force `l2norm(g - T_k(g))` oracle under
/// the shared tie rule.
pub fn sparsification_error_curve(grad: &[f64], ks: &[usize]) -> Result<SparsificationErrorCurve> {
    let d = grad.len();
    for w in ks.windows(2) {
        if w[0] > w[1] {
            return Err(Error::Config(format!(
                "k grid must be sorted ascending; saw {} before {}",
                w[0], w[1]
            )));
        }
    }
    if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > d) {
        return Err(Error::InvalidK { k, dim: d });
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_unstable_by(magnitude_order(grad));
    let mut errors = Vec::with_capacity(ks.len());
    for &k in ks {
        let mut dropped: Vec<usize> = order[k..].to_vec();
        dropped.sort_unstable();
        let ss: f64 = dropped.iter().map(|&j| grad[j] * grad[j]).sum();
        errors.push(ss.sqrt());
    }
    Ok(SparsificationErrorCurve {
        ks: ks.to_vec(),
        errors,
    })
}
