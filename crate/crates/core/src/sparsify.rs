//! Compression operators and error-compensation memory.
//!
//! Every operator shares one tie rule — magnitude descending, lower index
//! first — so threshold-based selections, Top-k, and the test oracles agree
//! exactly. Entries whose value is exactly zero are never carried in a
//! [`SparseGradient`]; on inputs with fewer than `k` nonzeros the achieved
//! count `k_hat` falls below `k`.

use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::gradmodel::{self, magnitude_order};
use crate::{Error, Result};

/// Index/value pairs surviving a compression step.
///
/// Invariants: indices strictly increasing and within `[0, dim)`, values
/// nonzero, `nnz <= dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseGradient {
    indices: Vec<usize>,
    values: Vec<f64>,
    dim: usize,
}

impl SparseGradient {
    /// Validates the structural invariants.
    pub fn new(indices: Vec<usize>, values: Vec<f64>, dim: usize) -> Result<Self> {
        if indices.len() != values.len() {
            return Err(Error::DimMismatch {
                left: indices.len(),
                right: values.len(),
            });
        }
        if indices.len() > dim {
            return Err(Error::DimMismatch {
                left: indices.len(),
                right: dim,
            });
        }
        for w in indices.windows(2) {
            if w[0] >= w[1] {
                return Err(Error::Format(format!(
                    "sparse indices not strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        if indices.last().is_some_and(|&i| i >= dim) {
            return Err(Error::Format(format!(
                "sparse index {} out of range for dim {dim}",
                indices.last().unwrap()
            )));
        }
        if values.contains(&0.0) {
            return Err(Error::Format("sparse value is zero".into()));
        }
        Ok(Self {
            indices,
            values,
            dim,
        })
    }

    /// Builds from a magnitude-selected index set: sorts the indices, reads
    /// values from `grad`, and drops exact zeros.
    fn from_selected(mut selected: Vec<usize>, grad: &[f64]) -> Self {
        selected.sort_unstable();
        let mut indices = Vec::with_capacity(selected.len());
        let mut values = Vec::with_capacity(selected.len());
        for i in selected {
            if grad[i] != 0.0 {
                indices.push(i);
                values.push(grad[i]);
            }
        }
        Self {
            indices,
            values,
            dim: grad.len(),
        }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Expands to a dense vector with zeros off the support.
    pub fn densify(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (i, v) in self.indices.iter().zip(&self.values) {
            out[*i] = *v;
        }
        out
    }
}

/// Fixed per-call compression statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionStats {
    /// Requested selection count (`ceil(delta * d)` for ratio-driven
    /// compressors; equals `k_hat` for plain threshold application).
    pub k_target: usize,
    /// Achieved count actually carried.
    pub k_hat: usize,
    /// The magnitude threshold that produced the selection.
    pub threshold: f64,
    /// Wall time of the operator call.
    pub elapsed: Duration,
}

/// `ceil(delta * d)` clamped to `[1, d]`: the selection count for a target
/// ratio. Guarantees `k >= 1` for every `delta > 0`.
pub fn k_from_ratio(delta: f64, dim: usize) -> usize {
    ((delta * dim as f64).ceil() as usize).clamp(1, dim)
}

/// Exact Top-k by partial selection (introselect, expected `O(d)`).
///
/// Keeps the `k` largest-magnitude elements; ties broken by lower index.
/// The recorded threshold is the k-th largest magnitude.
pub fn topk_exact(grad: &[f64], k: usize) -> Result<(SparseGradient, CompressionStats)> {
    let start = Instant::now();
    let d = grad.len();
    if k == 0 || k > d {
        return Err(Error::InvalidK { k, dim: d });
    }
    let mut idx: Vec<usize> = (0..d).collect();
    if k < d {
        idx.select_nth_unstable_by(k - 1, magnitude_order(grad));
        idx.truncate(k);
    }
    let threshold = idx
        .iter()
        .map(|&i| grad[i].abs())
        .fold(f64::INFINITY, f64::min);
    let sparse = SparseGradient::from_selected(idx, grad);
    let stats = CompressionStats {
        k_target: k,
        k_hat: sparse.nnz(),
        threshold,
        elapsed: start.elapsed(),
    };
    Ok((sparse, stats))
}

/// Uniform sample of `k` support indices without replacement.
pub fn randk(grad: &[f64], k: usize, seed: u64) -> Result<SparseGradient> {
    let d = grad.len();
    if k == 0 || k > d {
        return Err(Error::InvalidK { k, dim: d });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let selected = rand::seq::index::sample(&mut rng, d, k).into_vec();
    Ok(SparseGradient::from_selected(selected, grad))
}

/// Keeps every element with `|g_j| >= eta`.
///
/// At `eta = 0` this returns all nonzero elements (no compression). The
/// stats' `k_target` is set to the achieved count since no target ratio is
/// involved.
pub fn apply_threshold(grad: &[f64], eta: f64) -> (SparseGradient, CompressionStats) {
    let start = Instant::now();
    let selected: Vec<usize> = (0..grad.len()).filter(|&i| grad[i].abs() >= eta).collect();
    let sparse = SparseGradient::from_selected(selected, grad);
    let stats = CompressionStats {
        k_target: sparse.nnz(),
        k_hat: sparse.nnz(),
        threshold: eta,
        elapsed: start.elapsed(),
    };
    (sparse, stats)
}

/// Threshold at the exact empirical `(1-delta)`-quantile of `|g|` (the k-th
/// largest magnitude, `k = ceil(delta d)`), then [`apply_threshold`].
///
/// On distinct-magnitude inputs this selects exactly the Top-k support in
/// linear-ish time; with ties it may carry more than `k` elements (it is a
/// pure threshold operator, no truncation).
pub fn quantile_threshold(grad: &[f64], delta: f64) -> Result<(SparseGradient, CompressionStats)> {
    let start = Instant::now();
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::UnsupportedRatio(delta));
    }
    let k = k_from_ratio(delta, grad.len());
    let eta = kth_largest_magnitude(grad, k);
    let (sparse, mut stats) = apply_threshold(grad, eta);
    stats.k_target = k;
    stats.elapsed = start.elapsed();
    Ok((sparse, stats))
}

fn kth_largest_magnitude(grad: &[f64], k: usize) -> f64 {
    let mut mags: Vec<f64> = grad.iter().map(|v| v.abs()).collect();
    let (_, kth, _) = mags.select_nth_unstable_by(k - 1, |a, b| b.total_cmp(a));
    *kth
}

/// DGC-style sampled Top-k: estimates the threshold from a random
/// subsample, applies it, and truncates overshoot back to exactly `k`.
///
/// The candidate threshold is the `min(k, m)`-th largest magnitude among `m
/// = ceil(sample_fraction * d)` sampled elements. A subset's k-th largest
/// magnitude can never exceed the full vector's, so for `m >= k` the
/// threshold pass always returns at least `k` candidates and the final
/// exact Top-k truncation makes undershoot impossible; the two-selection
/// structure is the point (sample selection, then truncation). When the
/// sample is smaller than `k` the candidate threshold is the smallest
/// sampled magnitude and undershoot is kept as-is (no re-sampling).
///
/// `sample_fraction = 1.0` degenerates to [`topk_exact`] exactly (same tie
/// rule in both selections).
pub fn dgc_estimate(
    grad: &[f64],
    delta: f64,
    sample_fraction: f64,
    seed: u64,
) -> Result<(SparseGradient, CompressionStats)> {
    let start = Instant::now();
    let d = grad.len();
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::UnsupportedRatio(delta));
    }
    if !(sample_fraction > 0.0 && sample_fraction <= 1.0) {
        return Err(Error::UnsupportedRatio(sample_fraction));
    }
    let k = k_from_ratio(delta, d);
    let m = ((sample_fraction * d as f64).ceil() as usize).clamp(1, d);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sampled_mags: Vec<f64> = if m == d {
        grad.iter().map(|v| v.abs()).collect()
    } else {
        rand::seq::index::sample(&mut rng, d, m)
            .into_iter()
            .map(|i| grad[i].abs())
            .collect()
    };
    let ks = k.min(m);
    let (_, kth, _) = sampled_mags.select_nth_unstable_by(ks - 1, |a, b| b.total_cmp(a));
    let candidate = *kth;

    let mut survivors: Vec<usize> = (0..d).filter(|&i| grad[i].abs() >= candidate).collect();
    if survivors.len() > k {
        survivors.select_nth_unstable_by(k - 1, magnitude_order(grad));
        survivors.truncate(k);
    }
    let sparse = SparseGradient::from_selected(survivors, grad);
    let stats = CompressionStats {
        k_target: k,
        k_hat: sparse.nnz(),
        threshold: candidate,
        elapsed: start.elapsed(),
    };
    Ok((sparse, stats))
}

/// Single-stage Gaussian baseline: fits `N(mu, sigma)` to the raw values
/// and thresholds at the folded-normal `(1-delta)`-quantile.
///
/// One pass, no iterative adjustment; on non-Gaussian (heavy-tailed)
/// gradients the achieved count is materially off target, which is the
/// motivation for the sparsity-inducing families.
pub fn gaussian_estimate(grad: &[f64], delta: f64) -> Result<(SparseGradient, CompressionStats)> {
    let start = Instant::now();
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(Error::UnsupportedRatio(delta));
    }
    let k = k_from_ratio(delta, grad.len());
    let eta = if delta == 1.0 {
        0.0
    } else {
        let params = gradmodel::estimate_gaussian(grad)?;
        gradmodel::threshold_from_params(&params, delta)?.max(0.0)
    };
    let (sparse, mut stats) = apply_threshold(grad, eta);
    stats.k_target = k;
    stats.elapsed = start.elapsed();
    Ok((sparse, stats))
}

/// Error-compensation memory: the residual gradient a worker has not yet
/// transmitted. Single-owner — exactly one worker mutates a given memory.
#[derive(Debug, Clone, PartialEq)]
pub struct ECMemory {
    residual: Vec<f64>,
}

impl ECMemory {
    pub fn zeros(dim: usize) -> Self {
        Self {
            residual: vec![0.0; dim],
        }
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn dim(&self) -> usize {
        self.residual.len()
    }
}

/// Compensated gradient `g + residual`. The memory is not modified.
pub fn ec_apply(grad: &[f64], memory: &ECMemory) -> Result<Vec<f64>> {
    if grad.len() != memory.residual.len() {
        return Err(Error::DimMismatch {
            left: grad.len(),
            right: memory.residual.len(),
        });
    }
    Ok(grad
        .iter()
        .zip(&memory.residual)
        .map(|(g, r)| g + r)
        .collect())
}

/// Stores `residual = compensated - densify(sent)`.
///
/// Selection compressors copy values verbatim, so on the sent support the
/// subtraction cancels to exactly `0.0` and the conservation identity
/// `densify(sent) + residual == compensated` holds bitwise in 64-bit.
pub fn ec_update(memory: &mut ECMemory, compensated: &[f64], sent: &SparseGradient) -> Result<()> {
    if compensated.len() != memory.residual.len() {
        return Err(Error::DimMismatch {
            left: compensated.len(),
            right: memory.residual.len(),
        });
    }
    if sent.dim() != compensated.len() {
        return Err(Error::DimMismatch {
            left: sent.dim(),
            right: compensated.len(),
        });
    }
    memory.residual.copy_from_slice(compensated);
    for (i, v) in sent.indices().iter().zip(sent.values()) {
        memory.residual[*i] -= *v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_vec(d: usize, seed: u64) -> Vec<f64> {
        let normal = Normal::new(0.0, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..d).map(|_| normal.sample(&mut rng)).collect()
    }

    /// Full-sort Top-k oracle under the shared tie rule.
    fn topk_oracle(grad: &[f64], k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..grad.len()).collect();
        order.sort_by(magnitude_order(grad));
        let mut top: Vec<usize> = order[..k].to_vec();
        top.sort_unstable();
        top
    }

    #[test]
    fn topk_small_cases() {
        let (s, stats) = topk_exact(&[3.0, -2.0, 1.0], 2).unwrap();
        assert_eq!(s.indices(), &[0, 1]);
        assert_eq!(s.values(), &[3.0, -2.0]);
        assert_eq!(stats.k_hat, 2);
        assert_eq!(stats.threshold, 2.0);

        // Ties keep the lower indices.
        let (s, _) = topk_exact(&[1.0, 1.0, 1.0], 2).unwrap();
        assert_eq!(s.indices(), &[0, 1]);
    }

    #[test]
    fn topk_matches_full_sort_oracle() {
        let g = gaussian_vec(100_000, 3);
        let (s, stats) = topk_exact(&g, 100).unwrap();
        assert_eq!(s.indices(), topk_oracle(&g, 100).as_slice());
        assert_eq!(stats.k_hat, 100);
    }

    #[test]
    fn topk_rejects_bad_k() {
        assert!(matches!(topk_exact(&[1.0], 0), Err(Error::InvalidK { .. })));
        assert!(matches!(topk_exact(&[1.0], 2), Err(Error::InvalidK { .. })));
    }

    #[test]
    fn topk_drops_exact_zeros() {
        let (s, stats) = topk_exact(&[0.0, 5.0, 0.0], 2).unwrap();
        assert_eq!(s.indices(), &[1]);
        assert_eq!(stats.k_hat, 1);
        assert_eq!(stats.k_target, 2);
    }

    #[test]
    fn randk_full_dim_is_identity_support() {
        let g = [1.0, -2.0, 3.0, 4.0];
        let s = randk(&g, 4, 9).unwrap();
        assert_eq!(s.indices(), &[0, 1, 2, 3]);
        assert_eq!(s.densify(), g);
    }

    #[test]
    fn randk_deterministic_per_seed() {
        let g = gaussian_vec(1000, 5);
        assert_eq!(randk(&g, 50, 7).unwrap(), randk(&g, 50, 7).unwrap());
        assert_ne!(randk(&g, 50, 7).unwrap(), randk(&g, 50, 8).unwrap());
    }

    #[test]
    fn randk_selection_frequencies_uniform() {
        let d = 200;
        let k = 20;
        let trials = 10_000;
        let g = vec![1.0; d];
        let mut counts = vec![0u32; d];
        for t in 0..trials {
            for &i in randk(&g, k, t as u64).unwrap().indices() {
                counts[i] += 1;
            }
        }
        let p = k as f64 / d as f64;
        let tol = 4.0 * (trials as f64 * p * (1.0 - p)).sqrt();
        let expect = trials as f64 * p;
        for (i, &c) in counts.iter().enumerate() {
            assert!(
                (c as f64 - expect).abs() <= tol,
                "index {i}: count {c} vs {expect} +- {tol}"
            );
        }
    }

    #[test]
    fn threshold_small_cases() {
        let (s, stats) = apply_threshold(&[3.0, -2.0, 1.0], 2.0);
        assert_eq!(s.indices(), &[0, 1]);
        assert_eq!(stats.k_hat, 2);

        let (s, stats) = apply_threshold(&[3.0, -2.0, 1.0], 10.0);
        assert_eq!(s.nnz(), 0);
        assert_eq!(stats.k_hat, 0);

        // eta = 0 keeps all nonzero elements.
        let (s, _) = apply_threshold(&[3.0, 0.0, 1.0], 0.0);
        assert_eq!(s.indices(), &[0, 2]);
    }

    #[test]
    fn threshold_at_exact_quantile_equals_topk() {
        let g = gaussian_vec(100_000, 11);
        let k = 1000;
        let (topk, _) = topk_exact(&g, k).unwrap();
        let (by_quantile, stats) = quantile_threshold(&g, k as f64 / g.len() as f64).unwrap();
        assert_eq!(by_quantile.indices(), topk.indices());
        assert_eq!(by_quantile.values(), topk.values());
        assert_eq!(stats.k_hat, k);
    }

    #[test]
    fn dgc_full_sample_identical_to_topk() {
        let g = gaussian_vec(20_000, 13);
        let delta = 0.01;
        let (s_dgc, st_dgc) = dgc_estimate(&g, delta, 1.0, 99).unwrap();
        let (s_topk, st_topk) = topk_exact(&g, k_from_ratio(delta, g.len())).unwrap();
        assert_eq!(s_dgc, s_topk);
        assert_eq!(st_dgc.threshold, st_topk.threshold);
    }

    #[test]
    fn dgc_band_over_seeds() {
        // d = 1e6 Gaussian, delta = 0.001, default 1% sampling: k_hat/k must
        // land in [0.9, 1.0] for every seed (truncation forbids overshoot;
        // the sampled threshold is a subset k-th largest, so it cannot
        // exceed the full-vector k-th largest and undershoot is impossible
        // when the sample is larger than k).
        let g = gaussian_vec(1_000_000, 17);
        let k = k_from_ratio(0.001, g.len());
        for seed in 0..50 {
            let (_, stats) = dgc_estimate(&g, 0.001, 0.01, seed).unwrap();
            let ratio = stats.k_hat as f64 / k as f64;
            assert!(
                (0.9..=1.0).contains(&ratio),
                "seed {seed}: k_hat/k = {ratio}"
            );
        }
    }

    #[test]
    fn dgc_deterministic_per_seed() {
        let g = gaussian_vec(50_000, 19);
        let a = dgc_estimate(&g, 0.01, 0.01, 4).unwrap();
        let b = dgc_estimate(&g, 0.01, 0.01, 4).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.k_hat, b.1.k_hat);
    }

    #[test]
    fn dgc_undershoot_kept_when_sample_smaller_than_k() {
        // d = 100, k = 50, but only 1 sampled element: candidate threshold
        // is that element's magnitude; whatever survives is kept without
        // re-sampling (never more than k though).
        let g: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        let (s, stats) = dgc_estimate(&g, 0.5, 0.01, 2).unwrap();
        assert!(stats.k_hat <= 50);
        assert_eq!(s.nnz(), stats.k_hat);
    }

    #[test]
    fn gaussian_estimate_on_model_match() {
        let g = gaussian_vec(1_000_000, 23);
        let delta = 0.01;
        let (_, stats) = gaussian_estimate(&g, delta).unwrap();
        let k = k_from_ratio(delta, g.len());
        let ratio = stats.k_hat as f64 / k as f64;
        assert!((0.9..=1.1).contains(&ratio), "k_hat/k = {ratio}");
    }

    #[test]
    fn gaussian_estimate_mismatched_on_laplace() {
        // On heavy-tailed data the Gaussian fit misses the tail badly at
        // delta = 0.001; direction-only check documenting the motivation
        // for the SPD families.
        let g = crate::synth::generate(
            crate::synth::SynthLaw::Laplace { scale: 1.0 },
            1_000_000,
            29,
        )
        .unwrap();
        let delta = 0.001;
        let (_, stats) = gaussian_estimate(&g, delta).unwrap();
        let k = k_from_ratio(delta, g.len());
        let ratio = stats.k_hat as f64 / k as f64;
        assert!(
            !(0.8..=1.2).contains(&ratio),
            "expected a material miss, got k_hat/k = {ratio}"
        );
    }

    #[test]
    fn gaussian_estimate_constant_vector_degenerate() {
        assert!(matches!(
            gaussian_estimate(&[2.0; 100], 0.1),
            Err(Error::DegenerateInput(_))
        ));
    }

    #[test]
    fn delta_one_keeps_every_nonzero() {
        let g = [1.0, 0.0, -2.0, 0.5];
        let (s, _) = gaussian_estimate(&g, 1.0).unwrap();
        assert_eq!(s.indices(), &[0, 2, 3]);
        let (s, _) = dgc_estimate(&g, 1.0, 1.0, 0).unwrap();
        assert_eq!(s.nnz(), 3);
        let (s, _) = quantile_threshold(&g, 1.0).unwrap();
        assert_eq!(s.nnz(), 3);
    }

    #[test]
    fn ec_identity_and_additivity() {
        let mem = ECMemory::zeros(3);
        assert_eq!(
            ec_apply(&[1.0, 2.0, 3.0], &mem).unwrap(),
            vec![1.0, 2.0, 3.0]
        );

        let mut mem = ECMemory::zeros(3);
        let sent = SparseGradient::new(vec![1], vec![2.0], 3).unwrap();
        ec_update(&mut mem, &[1.0, 2.0, 3.0], &sent).unwrap();
        assert_eq!(mem.residual(), &[1.0, 0.0, 3.0]);
        assert_eq!(
            ec_apply(&[1.0, 1.0, 1.0], &mem).unwrap(),
            vec![2.0, 1.0, 4.0]
        );
    }

    #[test]
    fn ec_update_edge_transmissions() {
        let mut mem = ECMemory::zeros(3);
        let g = [1.5, -2.5, 3.5];
        // Full transmission: zero residual.
        let full = SparseGradient::new(vec![0, 1, 2], g.to_vec(), 3).unwrap();
        ec_update(&mut mem, &g, &full).unwrap();
        assert_eq!(mem.residual(), &[0.0, 0.0, 0.0]);
        // Empty transmission: residual equals the compensated gradient.
        let empty = SparseGradient::new(vec![], vec![], 3).unwrap();
        ec_update(&mut mem, &g, &empty).unwrap();
        assert_eq!(mem.residual(), &g);
    }

    #[test]
    fn ec_conservation_exact_across_compressors() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let normal = Normal::new(0.0, 1.0).unwrap();
        for trial in 0..200 {
            let d = rng.gen_range(2..300);
            let mut g: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();
            // Sprinkle exact zeros.
            for _ in 0..d / 10 {
                let i = rng.gen_range(0..d);
                g[i] = 0.0;
            }
            let k = rng.gen_range(1..=d);
            let sparse = match trial % 4 {
                0 => topk_exact(&g, k).unwrap().0,
                1 => randk(&g, k, trial as u64).unwrap(),
                2 => apply_threshold(&g, rng.gen_range(0.0..2.0)).0,
                _ => {
                    dgc_estimate(&g, k as f64 / d as f64, 0.3, trial as u64)
                        .unwrap()
                        .0
                }
            };
            let mut mem = ECMemory::zeros(d);
            ec_update(&mut mem, &g, &sparse).unwrap();
            let dense = sparse.densify();
            for j in 0..d {
                let recovered = dense[j] + mem.residual()[j];
                assert!(
                    recovered == g[j],
                    "trial {trial} index {j}: {recovered} != {}",
                    g[j]
                );
            }
        }
    }

    #[test]
    fn ec_dim_mismatch_rejected() {
        let mem = ECMemory::zeros(3);
        assert!(matches!(
            ec_apply(&[1.0, 2.0], &mem),
            Err(Error::DimMismatch { .. })
        ));
        let mut mem = ECMemory::zeros(3);
        let sent = SparseGradient::new(vec![0], vec![1.0], 2).unwrap();
        assert!(ec_update(&mut mem, &[1.0, 2.0, 3.0], &sent).is_err());
    }

    #[test]
    fn k_contraction_at_exact_quantile() {
        // Over 200 Gaussian vectors, mean squared sparsification error at
        // the exact delta-quantile threshold stays below (1 - delta) times
        // the mean squared norm.
        let delta = 0.1;
        let mut err_sum = 0.0;
        let mut norm_sum = 0.0;
        for seed in 0..200 {
            let g = gaussian_vec(10_000, 1000 + seed);
            let (s, _) = quantile_threshold(&g, delta).unwrap();
            let dense = s.densify();
            err_sum += g
                .iter()
                .zip(&dense)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            norm_sum += g.iter().map(|v| v * v).sum::<f64>();
        }
        assert!(
            err_sum / 200.0 <= (1.0 - delta) * norm_sum / 200.0,
            "mean error {} vs bound {}",
            err_sum / 200.0,
            (1.0 - delta) * norm_sum / 200.0
        );
    }

    #[test]
    fn sparse_gradient_validation() {
        assert!(SparseGradient::new(vec![0, 0], vec![1.0, 2.0], 3).is_err());
        assert!(SparseGradient::new(vec![2, 1], vec![1.0, 2.0], 3).is_err());
        assert!(SparseGradient::new(vec![0, 3], vec![1.0, 2.0], 3).is_err());
        assert!(SparseGradient::new(vec![0], vec![0.0], 3).is_err());
        assert!(SparseGradient::new(vec![0], vec![1.0, 2.0], 3).is_err());
        assert!(SparseGradient::new(vec![0, 2], vec![1.0, 2.0], 3).is_ok());
    }

    #[test]
    fn k_from_ratio_ceiling_and_bounds() {
        assert_eq!(k_from_ratio(0.001, 1000), 1);
        assert_eq!(k_from_ratio(0.0011, 1000), 2);
        assert_eq!(k_from_ratio(1.0, 1000), 1000);
        assert_eq!(k_from_ratio(1e-12, 10), 1);
    }
}
