//! Desk-scale simulated distributed synchronous SGD with error
//! compensation.
//!
//! N workers each hold a full replica of the model and a shard of a
//! synthetic dataset. Per iteration every worker: draws a seeded minibatch,
//! computes its stochastic gradient, adds its error-compensation residual,
//! compresses the compensated gradient, and stores the new residual. The
//! sparse gradients are averaged in fixed worker order (bit-reproducible),
//! and every replica applies the same descent step. Replica consistency is
//! verified by hashing the parameter bits each iteration.
//!
//! Determinism contract: identical config and seeds give bit-identical
//! traces, with or without worker-thread parallelism — per-worker RNG
//! streams are derived by counter hashing, and the aggregation order is
//! fixed regardless of which thread finished first.

use std::collections::hash_map::DefaultHasher;
use std::hash::Hasher;
use std::path::{Path, PathBuf};
use std::time::Duration;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compressor::{Compressor, CompressorConfig, CompressorName};
use crate::sparsify::{ec_apply, ec_update, ECMemory, SparseGradient};
use crate::trace::{write_trace, ElemType};
use crate::{Error, Result};

/// Model family trained by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Least squares: loss `mean((w . phi - y)^2) / 2`.
    Linear,
    /// Logistic regression on labels in {0, 1}.
    Logistic,
    /// One tanh hidden layer of the configured width, logistic output.
    Mlp,
}

/// Synthetic dataset generator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// Gaussian features, linear targets plus Gaussian noise.
    Linear,
    /// Gaussian features, Bernoulli labels from a logistic teacher with a
    /// noise-scaled logit perturbation. The label noise puts a floor under
    /// the attainable loss.
    Logistic,
    /// Two interleaved half-circles in 2 features (noise jitters the
    /// points); the classic nonlinear benchmark for the MLP.
    TwoMoons,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub n_samples: usize,
    pub n_features: usize,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub seed: u64,
}

/// Training harness configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub workers: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub iterations: usize,
    pub compressor: CompressorConfig,
    pub model: ModelKind,
    /// Hidden width, MLP only.
    pub hidden: usize,
    pub dataset: DatasetConfig,
    /// Iterations at the start that skip compression entirely.
    pub warmup_iterations: usize,
    /// When false (the default) the per-iteration elapsed time is recorded
    /// as zero so that seeded reruns emit byte-identical CSV.
    pub record_timing: bool,
    /// Run the worker phase on a thread pool. Results are identical to the
    /// sequential schedule by construction.
    pub parallel: bool,
    pub seed: u64,
}

impl TrainConfig {
    /// A small, runnable default: 8 workers, logistic regression on a
    /// synthetic logistic dataset, no compression.
    pub fn new(model: ModelKind, dataset: DatasetConfig) -> Self {
        Self {
            workers: 8,
            batch_size: 32,
            learning_rate: 0.05,
            iterations: 200,
            compressor: CompressorConfig::new(CompressorName::None, 1.0),
            model,
            hidden: 16,
            dataset,
            warmup_iterations: 0,
            record_timing: false,
            parallel: false,
            seed: 0,
        }
    }

    /// Model parameter count for this configuration.
    pub fn param_dim(&self) -> usize {
        let f = self.dataset.n_features;
        match self.model {
            ModelKind::Linear | ModelKind::Logistic => f,
            ModelKind::Mlp => self.hidden * (f + 2) + 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.workers == 0 {
            problems.push("workers must be >= 1".into());
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be >= 1".into());
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            problems.push(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.iterations == 0 {
            problems.push("iterations must be >= 1".into());
        }
        if self.dataset.n_samples < self.workers.max(1) {
            problems.push(format!(
                "n_samples {} cannot shard over {} workers",
                self.dataset.n_samples, self.workers
            ));
        }
        if self.dataset.n_features == 0 {
            problems.push("n_features must be >= 1".into());
        }
        if self.dataset.kind == DatasetKind::TwoMoons && self.dataset.n_features != 2 {
            problems.push(format!(
                "two-moons data has exactly 2 features, got {}",
                self.dataset.n_features
            ));
        }
        if self.model == ModelKind::Mlp && self.hidden == 0 {
            problems.push("hidden width must be >= 1 for the mlp model".into());
        }
        if let Err(Error::Config(msg)) = self.compressor.validate() {
            problems.push(msg);
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Row-major dataset: `features[i * n_features ..][..n_features]`, label
/// `targets[i]`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Vec<f64>,
    pub targets: Vec<f64>,
    pub n_features: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }
}

/// Materializes the configured synthetic dataset.
pub fn build_dataset(cfg: &DatasetConfig) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let n = cfg.n_samples;
    let f = cfg.n_features;
    match cfg.kind {
        DatasetKind::Linear => {
            let w_star: Vec<f64> = (0..f).map(|_| normal.sample(&mut rng)).collect();
            let mut features = Vec::with_capacity(n * f);
            let mut targets = Vec::with_capacity(n);
            for _ in 0..n {
                let row: Vec<f64> = (0..f).map(|_| normal.sample(&mut rng)).collect();
                let y: f64 = row.iter().zip(&w_star).map(|(a, b)| a * b).sum::<f64>()
                    + cfg.noise * normal.sample(&mut rng);
                features.extend_from_slice(&row);
                targets.push(y);
            }
            Ok(Dataset {
                features,
                targets,
                n_features: f,
            })
        }
        DatasetKind::Logistic => {
            let w_star: Vec<f64> = (0..f).map(|_| normal.sample(&mut rng)).collect();
            // Normalize the teacher to a fixed norm so the logit scale (and
            // hence the Bayes error) is controlled by `noise` alone, not by
            // dimension. Norm 4 puts the irreducible loss near 0.2 nats, low
            // enough that convergence is visible against the ln 2 start.
            let norm = w_star.iter().map(|v| v * v).sum::<f64>().sqrt();
            let w_star: Vec<f64> = w_star.iter().map(|v| 4.0 * v / norm).collect();
            let mut features = Vec::with_capacity(n * f);
            let mut targets = Vec::with_capacity(n);
            for _ in 0..n {
                let row: Vec<f64> = (0..f).map(|_| normal.sample(&mut rng)).collect();
                let z: f64 = row.iter().zip(&w_star).map(|(a, b)| a * b).sum::<f64>()
                    + cfg.noise * normal.sample(&mut rng);
                let p = sigmoid(z);
                let y = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
                features.extend_from_slice(&row);
                targets.push(y);
            }
            Ok(Dataset {
                features,
                targets,
                n_features: f,
            })
        }
        DatasetKind::TwoMoons => {
            let mut features = Vec::with_capacity(n * 2);
            let mut targets = Vec::with_capacity(n);
            let half = n.div_ceil(2);
            for i in 0..n {
                let label = (i >= half) as usize;
                let t = std::f64::consts::PI * (i % half) as f64 / half.max(1) as f64;
                let (x, y) = if label == 0 {
                    (t.cos(), t.sin())
                } else {
                    (1.0 - t.cos(), 0.5 - t.sin())
                };
                features.push(x + cfg.noise * normal.sample(&mut rng));
                features.push(y + cfg.noise * normal.sample(&mut rng));
                targets.push(label as f64);
            }
            Ok(Dataset {
                features,
                targets,
                n_features: 2,
            })
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + exp(z))`, stable on both sides.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Logistic loss of one example given the logit.
fn logistic_loss(z: f64, y: f64) -> f64 {
    y * softplus(-z) + (1.0 - y) * softplus(z)
}

/// Mean loss and gradient of `model` at `params` over the given example
/// indices. The gradient buffer is zeroed and filled.
fn loss_and_grad(
    model: ModelKind,
    hidden: usize,
    params: &[f64],
    data: &Dataset,
    rows: &[usize],
    grad: Option<&mut Vec<f64>>,
) -> f64 {
    let f = data.n_features;
    let inv_b = 1.0 / rows.len() as f64;
    let mut loss = 0.0;
    match model {
        ModelKind::Linear => {
            let mut g = grad;
            if let Some(g) = g.as_deref_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for &i in rows {
                let phi = data.row(i);
                let err = dot(params, phi) - data.targets[i];
                loss += 0.5 * err * err;
                if let Some(g) = g.as_deref_mut() {
                    for (gj, xj) in g.iter_mut().zip(phi) {
                        *gj += err * xj * inv_b;
                    }
                }
            }
        }
        ModelKind::Logistic => {
            let mut g = grad;
            if let Some(g) = g.as_deref_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for &i in rows {
                let phi = data.row(i);
                let y = data.targets[i];
                let z = dot(params, phi);
                loss += logistic_loss(z, y);
                if let Some(g) = g.as_deref_mut() {
                    let coeff = (sigmoid(z) - y) * inv_b;
                    for (gj, xj) in g.iter_mut().zip(phi) {
                        *gj += coeff * xj;
                    }
                }
            }
        }
        ModelKind::Mlp => {
            // Layout: W1 (hidden x f, row-major) | b1 (hidden) | w2 (hidden) | b2.
            let h = hidden;
            let (w1, rest) = params.split_at(h * f);
            let (b1, rest) = rest.split_at(h);
            let (w2, b2) = rest.split_at(h);
            let b2 = b2[0];
            let mut g = grad;
            if let Some(g) = g.as_deref_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            let mut act = vec![0.0; h];
            for &i in rows {
                let phi = data.row(i);
                let y = data.targets[i];
                for j in 0..h {
                    act[j] = (dot(&w1[j * f..(j + 1) * f], phi) + b1[j]).tanh();
                }
                let z = dot(w2, &act) + b2;
                loss += logistic_loss(z, y);
                if let Some(g) = g.as_deref_mut() {
                    let dz = (sigmoid(z) - y) * inv_b;
                    let (gw1, grest) = g.split_at_mut(h * f);
                    let (gb1, grest) = grest.split_at_mut(h);
                    let (gw2, gb2) = grest.split_at_mut(h);
                    gb2[0] += dz;
                    for j in 0..h {
                        gw2[j] += dz * act[j];
                        let da = dz * w2[j] * (1.0 - act[j] * act[j]);
                        gb1[j] += da;
                        for (gj, xj) in gw1[j * f..(j + 1) * f].iter_mut().zip(phi) {
                            *gj += da * xj;
                        }
                    }
                }
            }
        }
    }
    loss * inv_b
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One worker replica.
#[derive(Debug, Clone)]
pub struct WorkerState {
    pub params: Vec<f64>,
    pub ec: ECMemory,
    /// Indices into the shared dataset owned by this worker.
    pub shard: Vec<usize>,
    pub rng_seed: u64,
    pub compressor: Compressor,
}

/// Mean stochastic gradient at the worker's current parameters over a
/// seeded minibatch of `batch_size` rows drawn from its shard with
/// replacement. Deterministic per (worker seed, iteration).
pub fn worker_step(
    worker: &WorkerState,
    model: ModelKind,
    hidden: usize,
    data: &Dataset,
    batch_size: usize,
    iteration: usize,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(worker.rng_seed ^ mix(iteration as u64)));
    let rows: Vec<usize> = (0..batch_size)
        .map(|_| worker.shard[rng.gen_range(0..worker.shard.len())])
        .collect();
    let mut grad = vec![0.0; worker.params.len()];
    loss_and_grad(model, hidden, &worker.params, data, &rows, Some(&mut grad));
    grad
}

/// SplitMix64 finalizer; decorrelates worker/iteration counters into seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Seed for a worker's compression randomness at one iteration; salted so
/// it never collides with the minibatch stream.
fn compress_seed(worker_seed: u64, iteration: usize) -> u64 {
    mix(worker_seed ^ mix(iteration as u64) ^ 0x636f6d7072657373)
}

/// Averages sparse gradients in fixed worker order: `(1/N) sum densify(s)`.
pub fn aggregate(sparse: &[SparseGradient]) -> Result<Vec<f64>> {
    let dim = sparse
        .first()
        .ok_or_else(|| Error::DegenerateInput("no gradients to aggregate".into()))?
        .dim();
    let mut acc = vec![0.0; dim];
    for s in sparse {
        if s.dim() != dim {
            return Err(Error::DimMismatch {
                left: s.dim(),
                right: dim,
            });
        }
        for (i, v) in s.indices().iter().zip(s.values()) {
            acc[*i] += *v;
        }
    }
    let scale = 1.0 / sparse.len() as f64;
    acc.iter_mut().for_each(|v| *v *= scale);
    Ok(acc)
}

/// Per-iteration record.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Full-dataset loss after this iteration's update.
    pub loss: f64,
    /// Achieved selection count per worker.
    pub k_hats: Vec<usize>,
    /// Worker 0's threshold.
    pub threshold: f64,
    /// Stage count of a multi-stage estimator (worker 0), when applicable.
    pub m_stages: Option<u32>,
    /// Sum of per-worker compression times; zero unless
    /// `record_timing` was set.
    pub elapsed: Duration,
    /// Parameter-bits hash per worker after the update; all entries equal
    /// on a healthy run.
    pub replica_hashes: Vec<u64>,
}

/// Output of [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub records: Vec<IterationRecord>,
    /// Iteration at which the loss stopped being finite, if any; the
    /// records up to and including it are kept.
    pub diverged: Option<usize>,
    pub final_params: Vec<f64>,
}

impl TrainOutput {
    pub fn final_loss(&self) -> Option<f64> {
        self.records.last().map(|r| r.loss)
    }
}

fn hash_bits(params: &[f64]) -> u64 {
    let mut h = DefaultHasher::new();
    for v in params {
        h.write_u64(v.to_bits());
    }
    h.finish()
}

fn init_params(cfg: &TrainConfig) -> Vec<f64> {
    let d = cfg.param_dim();
    match cfg.model {
        // Zeros are a fine symmetric start for the linear models.
        ModelKind::Linear | ModelKind::Logistic => vec![0.0; d],
        // The MLP needs symmetry breaking.
        ModelKind::Mlp => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix(cfg.seed ^ 0x6d6c70));
            let scale = 1.0 / (cfg.dataset.n_features as f64).sqrt();
            let normal = Normal::new(0.0, scale).expect("positive scale");
            (0..d).map(|_| normal.sample(&mut rng)).collect()
        }
    }
}

fn build_workers(cfg: &TrainConfig, dim: usize) -> Result<Vec<WorkerState>> {
    let params = init_params(cfg);
    (0..cfg.workers)
        .map(|n| {
            Ok(WorkerState {
                params: params.clone(),
                ec: ECMemory::zeros(dim),
                shard: (n..cfg.dataset.n_samples).step_by(cfg.workers).collect(),
                rng_seed: mix(cfg.seed ^ mix(n as u64 | 1u64 << 32)),
                compressor: Compressor::from_config(&cfg.compressor)?,
            })
        })
        .collect()
}

/// Runs the synchronous training loop and returns the full metric trace.
///
/// Per iteration: compensate, compress, aggregate (fixed order), apply the
/// same descent step on every replica, update the residuals, verify replica
/// hashes, and evaluate the full-dataset loss. If the loss stops being
/// finite the loop halts and the partial trace is returned with `diverged`
/// set.
pub fn train(cfg: &TrainConfig) -> Result<TrainOutput> {
    cfg.validate()?;
    let data = build_dataset(&cfg.dataset)?;
    let dim = cfg.param_dim();
    let mut workers = build_workers(cfg, dim)?;
    let all_rows: Vec<usize> = (0..data.len()).collect();

    let mut records = Vec::with_capacity(cfg.iterations);
    let mut diverged = None;

    for iter in 0..cfg.iterations {
        let compress_active = iter >= cfg.warmup_iterations;

        // Worker phase: gradient, compensation, compression.
        let step = |worker: &mut WorkerState| -> Result<(SparseGradient, usize, f64, Duration)> {
            let grad = worker_step(worker, cfg.model, cfg.hidden, &data, cfg.batch_size, iter);
            let compensated = ec_apply(&grad, &worker.ec)?;
            let (sparse, stats) = if compress_active {
                worker
                    .compressor
                    .compress(&compensated, compress_seed(worker.rng_seed, iter))?
            } else {
                let (sparse, stats) = crate::sparsify::apply_threshold(&compensated, 0.0);
                (sparse, stats)
            };
            ec_update(&mut worker.ec, &compensated, &sparse)?;
            Ok((sparse, stats.k_hat, stats.threshold, stats.elapsed))
        };
        let results: Vec<(SparseGradient, usize, f64, Duration)> = if cfg.parallel {
            workers
                .par_iter_mut()
                .map(step)
                .collect::<Result<Vec<_>>>()?
        } else {
            workers.iter_mut().map(step).collect::<Result<Vec<_>>>()?
        };

        let sparse: Vec<SparseGradient> = results.iter().map(|r| r.0.clone()).collect();
        let avg = aggregate(&sparse)?;

        // Identical update on every replica.
        for worker in &mut workers {
            for (x, g) in worker.params.iter_mut().zip(&avg) {
                *x -= cfg.learning_rate * g;
            }
        }

        let replica_hashes: Vec<u64> = workers.iter().map(|w| hash_bits(&w.params)).collect();
        if replica_hashes.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::DegenerateInput(format!(
                "replica parameter hashes diverged at iteration {iter}"
            )));
        }

        let loss = loss_and_grad(
            cfg.model,
            cfg.hidden,
            &workers[0].params,
            &data,
            &all_rows,
            None,
        );
        let elapsed = if cfg.record_timing {
            results.iter().map(|r| r.3).sum()
        } else {
            Duration::ZERO
        };
        records.push(IterationRecord {
            iteration: iter,
            loss,
            k_hats: results.iter().map(|r| r.1).collect(),
            threshold: results[0].2,
            m_stages: workers[0].compressor.stages(),
            elapsed,
            replica_hashes,
        });

        if !loss.is_finite() {
            diverged = Some(iter);
            break;
        }
    }

    Ok(TrainOutput {
        records,
        diverged,
        final_params: workers[0].params.clone(),
    })
}

/// Runs the training loop and dumps worker 0's compensated gradient (the
/// exact vector handed to the compressor; the raw gradient when no
/// compression or residual is active) at the requested iterations, as f64
/// trace files named `grad_iter_NNNNNN.sidg`. Returns the written paths.
pub fn trace_capture(
    cfg: &TrainConfig,
    dump_iterations: &[usize],
    out_dir: &Path,
) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    if dump_iterations.is_empty() {
        return Ok(Vec::new());
    }
    let data = build_dataset(&cfg.dataset)?;
    let dim = cfg.param_dim();
    let mut workers = build_workers(cfg, dim)?;
    let max_iter = *dump_iterations.iter().max().expect("nonempty");
    let iterations = cfg.iterations.max(max_iter + 1);

    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();

    for iter in 0..iterations {
        let compress_active = iter >= cfg.warmup_iterations;
        let mut sparse_all = Vec::with_capacity(cfg.workers);
        for (n, worker) in workers.iter_mut().enumerate() {
            let grad = worker_step(worker, cfg.model, cfg.hidden, &data, cfg.batch_size, iter);
            let compensated = ec_apply(&grad, &worker.ec)?;
            if n == 0 && dump_iterations.contains(&iter) {
                let path = out_dir.join(format!("grad_iter_{iter:06}.sidg"));
                write_trace(&path, &compensated, ElemType::F64)?;
                written.push(path);
            }
            let (sparse, _) = if compress_active {
                worker
                    .compressor
                    .compress(&compensated, compress_seed(worker.rng_seed, iter))?
            } else {
                crate::sparsify::apply_threshold(&compensated, 0.0)
            };
            ec_update(&mut worker.ec, &compensated, &sparse)?;
            sparse_all.push(sparse);
        }
        let avg = aggregate(&sparse_all)?;
        for worker in &mut workers {
            for (x, g) in worker.params.iter_mut().zip(&avg) {
                *x -= cfg.learning_rate * g;
            }
        }
    }
    Ok(written)
}
