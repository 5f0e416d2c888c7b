//! Statistical threshold estimation for gradient sparsification.
//!
//! This crate implements SIDCo-style multi-stage threshold estimators for
//! Top-k gradient compression, a set of baseline compressors (exact Top-k,
//! Rand-k, sampled-threshold DGC, a single-stage Gaussian fit), a desk-scale
//! simulated distributed synchronous SGD harness with error compensation,
//! and a latency microbenchmark harness.
//!
//! The central idea: gradients of over-parameterized models concentrate
//! around zero, so their magnitudes are well described by sparsity-inducing
//! distributions (double exponential, double gamma, double generalized
//! Pareto). Fitting such a distribution gives a closed-form threshold `eta`
//! for a target compression ratio `delta` in linear time, avoiding an exact
//! Top-k selection. Multi-stage peak-over-threshold refitting tightens the
//! estimate: each stage fits only the tail that survived the previous
//! stage's threshold, and the number of stages adapts online from the
//! achieved selection counts.
//!
//! Modules:
//! - [`gradmodel`]: distribution fitting, threshold formulas, compressibility
//!   diagnostics.
//! - [`sparsify`]: compression operators and error-compensation memory.
//! - [`sidco`]: the multi-stage adaptive estimator.
//! - [`compressor`]: uniform dispatch over all compressors.
//! - [`sim`]: simulated N-worker synchronous SGD (Algorithm-style loop with
//!   error compensation).
//! - [`bench`]: latency microbenchmarks with CSV reporting.
//! - [`trace`]: binary gradient trace files.
//! - [`config`]: TOML run configuration.
//! - [`synth`]: synthetic gradient generators.

pub mod bench;
pub mod compressor;
pub mod config;
pub mod gradmodel;
pub mod sidco;
pub mod sim;
pub mod sparsify;
pub mod synth;
pub mod trace;

mod error;

pub use error::{Error, Result};
