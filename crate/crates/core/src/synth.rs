//! Synthetic gradient generators for benchmarks, traces, and tests.
//!
//! The signed laws draw a magnitude from the named family and attach a
//! random sign, producing the symmetric two-sided distributions that the
//! threshold estimators assume. `power_law` is deterministic: element `j`
//! (1-indexed) has magnitude `j^(-exponent)`.
//!
//! The generalized Pareto sampler inverts the CDF directly, which keeps it
//! independent from the moment-matching estimator it is used to test.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Gamma, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A synthetic data law with its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SynthLaw {
    /// Signed `N(mean, stddev)`.
    Gaussian { mean: f64, stddev: f64 },
    /// Double exponential: magnitude `Exp(scale)`, random sign.
    Laplace { scale: f64 },
    /// Double gamma: magnitude `Gamma(shape, scale)`, random sign.
    Gamma { shape: f64, scale: f64 },
    /// Double generalized Pareto: magnitude `GPD(shape, scale)` at location
    /// 0, random sign.
    Gpd { shape: f64, scale: f64 },
    /// Deterministic `j^(-exponent)` spectrum, no sign, no shuffling.
    PowerLaw { exponent: f64 },
}

impl SynthLaw {
    pub fn name(&self) -> &'static str {
        match self {
            SynthLaw::Gaussian { .. } => "gaussian",
            SynthLaw::Laplace { .. } => "laplace",
            SynthLaw::Gamma { .. } => "gamma",
            SynthLaw::Gpd { .. } => "gpd",
            SynthLaw::PowerLaw { .. } => "powerlaw",
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive, got {v}")))
            }
        };
        match *self {
            SynthLaw::Gaussian { stddev, .. } => positive("stddev", stddev),
            SynthLaw::Laplace { scale } => positive("scale", scale),
            SynthLaw::Gamma { shape, scale } => {
                positive("shape", shape)?;
                positive("scale", scale)
            }
            SynthLaw::Gpd { shape, scale } => {
                if !(-0.5..0.5).contains(&shape) {
                    return Err(Error::Config(format!(
                        "gpd shape must lie in (-0.5, 0.5), got {shape}"
                    )));
                }
                positive("scale", scale)
            }
            SynthLaw::PowerLaw { exponent } => positive("exponent", exponent),
        }
    }
}

/// Draws `dim` elements from `law` with a dedicated RNG stream per call.
pub fn generate(law: SynthLaw, dim: usize, seed: u64) -> Result<Vec<f64>> {
    law.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = match law {
        SynthLaw::Gaussian { mean, stddev } => {
            let dist = Normal::new(mean, stddev).expect("validated");
            (0..dim).map(|_| dist.sample(&mut rng)).collect()
        }
        SynthLaw::Laplace { scale } => {
            let dist = Exp::new(1.0 / scale).expect("validated");
            (0..dim)
                .map(|_| dist.sample(&mut rng) * sign(&mut rng))
                .collect()
        }
        SynthLaw::Gamma { shape, scale } => {
            let dist = Gamma::new(shape, scale).expect("validated");
            (0..dim)
                .map(|_| dist.sample(&mut rng) * sign(&mut rng))
                .collect()
        }
        SynthLaw::Gpd { shape, scale } => (0..dim)
            .map(|_| gpd_inverse_cdf(shape, scale, rng.gen::<f64>()) * sign(&mut rng))
            .collect(),
        SynthLaw::PowerLaw { exponent } => power_law(exponent, dim),
    };
    Ok(out)
}

fn sign<R: Rng>(rng: &mut R) -> f64 {
    if rng.gen_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

/// GPD quantile function at probability `u`:
/// `(scale/shape) ((1-u)^(-shape) - 1)`, with the exponential limit at
/// `shape == 0`.
fn gpd_inverse_cdf(shape: f64, scale: f64, u: f64) -> f64 {
    if shape.abs() < 1e-12 {
        -scale * (1.0 - u).ln()
    } else {
        scale / shape * ((1.0 - u).powf(-shape) - 1.0)
    }
}

/// GPD magnitude samples at location 0 (no sign), for estimator tests.
pub fn gpd_magnitudes(shape: f64, scale: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| gpd_inverse_cdf(shape, scale, rng.gen::<f64>()))
        .collect()
}

/// Deterministic power-law spectrum `g_j = j^(-exponent)`, `j = 1..=dim`.
pub fn power_law(exponent: f64, dim: usize) -> Vec<f64> {
    (1..=dim).map(|j| (j as f64).powf(-exponent)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_given_seed() {
        let law = SynthLaw::Laplace { scale: 1.0 };
        assert_eq!(
            generate(law, 1000, 9).unwrap(),
            generate(law, 1000, 9).unwrap()
        );
        assert_ne!(
            generate(law, 1000, 9).unwrap(),
            generate(law, 1000, 10).unwrap()
        );
    }

    #[test]
    fn power_law_is_monotone_decreasing() {
        let v = power_law(0.7, 100);
        assert_eq!(v[0], 1.0);
        for w in v.windows(2) {
            assert!(w[0] > w[1]);
        }
    }

    #[test]
    fn gpd_sampler_mean_matches_theory() {
        // E[X] = scale / (1 - shape) for shape < 1.
        let v = gpd_magnitudes(0.2, 1.0, 500_000, 77);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 1.25).abs() < 0.02, "mean = {mean}");
    }

    #[test]
    fn laplace_signs_are_balanced() {
        let v = generate(SynthLaw::Laplace { scale: 1.0 }, 100_000, 4).unwrap();
        let pos = v.iter().filter(|x| **x > 0.0).count();
        assert!((pos as f64 / v.len() as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(generate(SynthLaw::Laplace { scale: 0.0 }, 10, 1).is_err());
        assert!(generate(
            SynthLaw::Gpd {
                shape: 0.7,
                scale: 1.0
            },
            10,
            1
        )
        .is_err());
    }
}
