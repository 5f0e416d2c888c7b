//! Command-line driver: fit estimators to gradient traces, compress them,
//! run the simulated distributed SGD harness, benchmark compressor latency,
//! and generate synthetic traces.
//!
//! Exit codes: 0 success, 2 configuration/usage error, 3 data error
//! (unreadable or malformed files), 4 numerical degeneracy.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use sidco::bench::{bench_run, rows_to_csv, BenchSpec, TOPK_ALGORITHM_NOTE};
use sidco::compressor::{Compressor, CompressorConfig, CompressorName};
use sidco::config::RunConfig;
use sidco::gradmodel::{
    compressibility_check, estimate_exponential, estimate_gamma, estimate_gaussian, estimate_gpd,
    sparsification_error_curve, threshold_from_params, DistributionParams,
};
use sidco::sim::{train, TrainConfig};
use sidco::sparsify::k_from_ratio;
use sidco::synth::{generate, SynthLaw};
use sidco::trace::{read_trace, write_trace, ElemType};
use sidco::{Error, Result};

#[derive(Parser)]
#[command(
    name = "sidco",
    version,
    about = "Gradient sparsification toolkit: statistical threshold estimators, baseline \
             compressors, a simulated distributed SGD harness, and latency benchmarks"
)]
struct Cli {
    /// TOML run configuration (used by `train` and `bench`).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Global seed; overrides the config file's `seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory; overrides the config file's `out`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Report file format.
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Csv)]
    format: ReportFormat,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ReportFormat {
    Csv,
}

/// Distribution family for `fit`.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Family {
    Exponential,
    Gamma,
    Gpd,
    Gaussian,
}

/// Synthetic law for `trace-gen`.
#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LawName {
    Gaussian,
    Laplace,
    Gamma,
    Gpd,
    Powerlaw,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a sparsity-inducing distribution to a gradient trace and report
    /// the implied thresholds.
    Fit {
        /// Trace file (.sidg).
        trace: PathBuf,
        #[arg(long, value_enum)]
        family: Family,
    },
    /// Compress a gradient trace once; reports the stats as a CSV row on
    /// stdout.
    Compress {
        /// Trace file (.sidg).
        trace: PathBuf,
        /// One of: none, topk, randk, quantile, dgc, gaussian, sidco-e,
        /// sidco-gp, sidco-p.
        #[arg(long)]
        compressor: String,
        /// Target compression ratio k/d in (0, 1].
        #[arg(long, default_value_t = 0.01)]
        delta: f64,
        /// Sub-sample fraction (dgc only).
        #[arg(long, default_value_t = 0.01)]
        sample_fraction: f64,
    },
    /// Run the simulated distributed SGD harness from the config file;
    /// writes per-iteration CSV plus a summary.
    Train,
    /// Run the compressor latency grid; writes CSV plus a metadata sidecar.
    Bench {
        /// Additionally benchmark the quarter-billion-element size
        /// (~2 GiB input; slow).
        #[arg(long)]
        include_260m: bool,
    },
    /// Compressibility diagnostics for a gradient trace; writes the
    /// sparsification-error curve as CSV.
    Diagnose {
        /// Trace file (.sidg).
        trace: PathBuf,
        /// Fraction of the sorted head used for the decay fit.
        #[arg(long, default_value_t = 0.01)]
        head_fraction: f64,
    },
    /// Write a synthetic gradient trace.
    TraceGen {
        #[arg(long, value_enum)]
        law: LawName,
        #[arg(long, default_value_t = 1_000_000)]
        dim: usize,
        /// Element type: f32 or f64.
        #[arg(long, default_value = "f64")]
        elem: String,
        /// Output file; defaults to <out>/<law>_<dim>.sidg.
        #[arg(long, value_name = "PATH")]
        file: Option<PathBuf>,
        /// Mean (gaussian).
        #[arg(long, default_value_t = 0.0)]
        mean: f64,
        /// Standard deviation (gaussian).
        #[arg(long, default_value_t = 1.0)]
        stddev: f64,
        /// Scale (laplace, gamma, gpd).
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Shape (gamma, gpd).
        #[arg(long, default_value_t = 0.2)]
        shape: f64,
        /// Decay exponent (powerlaw).
        #[arg(long, default_value_t = 0.7)]
        exponent: f64,
    },
}

fn main() {
    // Die quietly on a closed pipe (e.g. `sidco fit ... | head`) instead of
    // panicking mid-print.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    match cli.command {
        Command::Fit { trace, family } => cmd_fit(&trace, family),
        Command::Compress {
            trace,
            compressor,
            delta,
            sample_fraction,
        } => cmd_compress(&cfg, &trace, &compressor, delta, sample_fraction),
        Command::Train => cmd_train(&cfg),
        Command::Bench { include_260m } => cmd_bench(&cfg, include_260m),
        Command::Diagnose {
            trace,
            head_fraction,
        } => cmd_diagnose(&cfg, &trace, head_fraction),
        Command::TraceGen {
            law,
            dim,
            elem,
            file,
            mean,
            stddev,
            scale,
            shape,
            exponent,
        } => {
            let law = match law {
                LawName::Gaussian => SynthLaw::Gaussian { mean, stddev },
                LawName::Laplace => SynthLaw::Laplace { scale },
                LawName::Gamma => SynthLaw::Gamma { shape, scale },
                LawName::Gpd => SynthLaw::Gpd { shape, scale },
                LawName::Powerlaw => SynthLaw::PowerLaw { exponent },
            };
            cmd_trace_gen(&cfg, law, dim, &elem, file)
        }
    }
}

fn params_lines(params: &DistributionParams) -> String {
    match params {
        DistributionParams::Exponential { scale } => format!("scale = {scale}"),
        DistributionParams::Gamma { shape, scale } => {
            format!("shape = {shape}\nscale = {scale}")
        }
        DistributionParams::GeneralizedPareto {
            shape,
            scale,
            location,
        } => format!("shape = {shape}\nscale = {scale}\nlocation = {location}"),
        DistributionParams::Gaussian { mean, stddev } => {
            format!("mean = {mean}\nstddev = {stddev}")
        }
    }
}

fn cmd_fit(trace_path: &Path, family: Family) -> Result<()> {
    let trace = read_trace(trace_path)?;
    let g = trace.gradient.as_slice();
    let abs: Vec<f64> = g.iter().map(|x| x.abs()).collect();
    let (name, params) = match family {
        Family::Exponential => ("exponential", estimate_exponential(&abs)?),
        Family::Gamma => ("gamma", estimate_gamma(&abs)?),
        Family::Gpd => ("gpd", estimate_gpd(&abs, 0.0)?.0),
        Family::Gaussian => ("gaussian", estimate_gaussian(g)?),
    };
    println!("trace = {}", trace_path.display());
    println!("n = {}", g.len());
    println!("family = {name}");
    println!("{}", params_lines(&params));

    // Empirical vs model magnitude quantiles. The model's q-quantile is the
    // threshold that retains a 1 - q fraction.
    let mut sorted = abs;
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    println!("quantile,empirical,model");
    for q in [0.9, 0.99, 0.999] {
        let k = (((1.0 - q) * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
        let empirical = sorted[k - 1];
        let model = threshold_from_params(&params, 1.0 - q)?;
        println!("{q},{empirical},{model}");
    }
    println!("delta,threshold");
    for delta in [0.1, 0.01, 0.001] {
        println!("{delta},{}", threshold_from_params(&params, delta)?);
    }
    Ok(())
}

fn cmd_compress(
    cfg: &RunConfig,
    trace_path: &Path,
    compressor: &str,
    delta: f64,
    sample_fraction: f64,
) -> Result<()> {
    let name: CompressorName = compressor.parse()?;
    let trace = read_trace(trace_path)?;
    let g = trace.gradient.as_slice();
    let mut cc = CompressorConfig::new(name, delta);
    cc.sample_fraction = sample_fraction;
    let mut comp = Compressor::from_config(&cc)?;
    let (_, stats) = comp.compress(g, cfg.seed)?;
    println!("compressor,dim,delta,k_target,k_hat,k_ratio,eta,elapsed_ns");
    println!(
        "{},{},{},{},{},{:.6},{},{}",
        name,
        g.len(),
        delta,
        stats.k_target,
        stats.k_hat,
        stats.k_hat as f64 / stats.k_target as f64,
        stats.threshold,
        stats.elapsed.as_nanos()
    );
    Ok(())
}

/// 90% two-sided normal interval half-width for the mean of `values`.
fn ci90_half_width(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    // Standard normal 0.95 quantile.
    1.6448536269514722 * (var / n as f64).sqrt()
}

fn cmd_train(cfg: &RunConfig) -> Result<()> {
    let train_cfg: TrainConfig = cfg.train_config()?;
    fs::create_dir_all(&cfg.out)?;
    let output = train(&train_cfg)?;

    let mut csv = String::from("iter,loss,k_hat,eta,M,elapsed_ns\n");
    for r in &output.records {
        let k_mean = r.k_hats.iter().sum::<usize>() as f64 / r.k_hats.len() as f64;
        let m = r.m_stages.map(|m| m.to_string()).unwrap_or_default();
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.iteration,
            r.loss,
            k_mean,
            r.threshold,
            m,
            r.elapsed.as_nanos()
        ));
    }
    let csv_path = cfg.out.join("train.csv");
    fs::write(&csv_path, &csv)?;

    let d = train_cfg.param_dim();
    let k_target = if train_cfg.compressor.name == CompressorName::None {
        d
    } else {
        k_from_ratio(train_cfg.compressor.delta, d)
    };
    let ratios: Vec<f64> = output
        .records
        .iter()
        .filter(|r| r.iteration >= train_cfg.warmup_iterations)
        .map(|r| {
            let k_mean = r.k_hats.iter().sum::<usize>() as f64 / r.k_hats.len() as f64;
            k_mean / k_target as f64
        })
        .collect();
    let mean_ratio = ratios.iter().sum::<f64>() / ratios.len().max(1) as f64;
    let mut summary = String::new();
    summary.push_str(&format!("iterations = {}\n", output.records.len()));
    summary.push_str(&format!(
        "final_loss = {}\n",
        output.final_loss().unwrap_or(f64::NAN)
    ));
    summary.push_str(&format!("mean_k_ratio = {mean_ratio}\n"));
    summary.push_str(&format!("ci90_half_width = {}\n", ci90_half_width(&ratios)));
    summary.push_str(&format!(
        "diverged = {}\n",
        output
            .diverged
            .map(|i| i.to_string())
            .unwrap_or_else(|| "none".into())
    ));
    fs::write(cfg.out.join("train_summary.txt"), &summary)?;
    print!("{summary}");
    eprintln!("wrote {}", csv_path.display());

    if let Some(i) = output.diverged {
        return Err(Error::NonConvergence(format!(
            "training diverged at iteration {i}; partial trace written to {}",
            csv_path.display()
        )));
    }
    Ok(())
}

fn cmd_bench(cfg: &RunConfig, include_260m: bool) -> Result<()> {
    let mut spec = if cfg.bench.is_some() {
        cfg.bench_spec()?
    } else {
        BenchSpec {
            seed: cfg.seed,
            ..BenchSpec::default()
        }
    };
    if include_260m {
        spec.include_260m = true;
    }
    let rows = bench_run(&spec)?;
    let csv = rows_to_csv(&rows);
    fs::create_dir_all(&cfg.out)?;
    let csv_path = cfg.out.join("bench.csv");
    fs::write(&csv_path, &csv)?;
    let meta = format!(
        "{}\nlaw = {}\nreps = {}\nwarmup = {}\nseed = {}\n",
        TOPK_ALGORITHM_NOTE,
        spec.law.name(),
        spec.reps,
        spec.warmup,
        spec.seed
    );
    fs::write(cfg.out.join("bench.csv.meta"), meta)?;
    print!("{csv}");
    eprintln!("wrote {}", csv_path.display());
    Ok(())
}

/// Geometric grid of selection counts: `steps + 1` points from 1 to `d`,
/// deduplicated.
fn log_k_grid(d: usize, steps: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = (0..=steps)
        .map(|j| {
            (d as f64)
                .powf(j as f64 / steps as f64)
                .round()
                .clamp(1.0, d as f64) as usize
        })
        .collect();
    ks.sort_unstable();
    ks.dedup();
    ks
}

fn cmd_diagnose(cfg: &RunConfig, trace_path: &Path, head_fraction: f64) -> Result<()> {
    let trace = read_trace(trace_path)?;
    let g = trace.gradient.as_slice();
    let report = compressibility_check(g, head_fraction);
    println!("trace = {}", trace_path.display());
    println!("n = {}", g.len());
    println!("decay_exponent = {}", report.decay_exponent);
    println!("prefactor = {}", report.prefactor);
    println!("fit_residual = {}", report.fit_residual);
    println!("compressible = {}", report.is_compressible);
    println!("degenerate = {}", report.degenerate);

    let ks = log_k_grid(g.len(), 50);
    let curve = sparsification_error_curve(g, &ks)?;
    let mut csv = String::from("k,sigma_k\n");
    for (k, sigma) in curve.ks.iter().zip(&curve.errors) {
        csv.push_str(&format!("{k},{sigma}\n"));
    }
    fs::create_dir_all(&cfg.out)?;
    let path = cfg.out.join("sigma_curve.csv");
    fs::write(&path, csv)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn cmd_trace_gen(
    cfg: &RunConfig,
    law: SynthLaw,
    dim: usize,
    elem: &str,
    file: Option<PathBuf>,
) -> Result<()> {
    let elem: ElemType = elem.parse()?;
    let values = generate(law, dim, cfg.seed)?;
    let path = file.unwrap_or_else(|| cfg.out.join(format!("{}_{}.sidg", law.name(), dim)));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    write_trace(&path, &values, elem)?;
    println!("wrote {} ({} elements)", path.display(), dim);
    Ok(())
}
