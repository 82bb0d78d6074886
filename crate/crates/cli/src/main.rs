//! `nodalchaos`: command-line front end for the nodal chaos library.
//!
//! Exit status: 0 when every internal check passes, 1 when some check
//! fails, 2 on usage or runtime errors.

mod commands;
mod config;
mod oracle;
mod output;
mod plot;
mod verify;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

use commands::Params;
use config::{ExperimentConfig, DEFAULT_SEED};
use output::{Checks, OutDir};

#[derive(Parser)]
#[command(name = "nodalchaos", version, about = "Chaos expansion of nodal lengths of Gaussian random fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON experiment config (schema_version 1).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Quadrature resolution (nodal: extraction grid resolution).
    #[arg(long, global = true)]
    resolution: Option<usize>,
    /// Fiber size K (directions per point).
    #[arg(long, global = true)]
    fiber: Option<usize>,
    /// Monte Carlo sample count.
    #[arg(long, global = true)]
    samples: Option<u64>,
    /// Level t of the level set.
    #[arg(long, global = true, allow_negative_numbers = true)]
    level: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Tabulate the chaos constants against independent oracles.
    Constants {
        #[arg(long, default_value_t = 6)]
        n_max: u32,
        #[arg(long, default_value_t = 12)]
        q_max: u32,
    },
    /// Run invariant suites: specfun, geometry, field, chaos, variance, nodal or all.
    Verify {
        #[arg(default_value = "all")]
        suite: String,
        #[arg(long, hide = true)]
        tamper_theta_sign: bool,
    },
    /// Sample chaos statistics of a field.
    Simulate,
    /// Exact variances, covariance bounds, closed forms and Monte Carlo.
    Variance,
    /// Second-chaos cancellation table over spectral bands.
    Berry,
    /// Monte Carlo nodal lengths, optionally with chaos covariances.
    Nodal,
}

fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global().context("configuring worker pool")?;
    }
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::empty(),
    };
    let seed = cli.seed.or(cfg.seed).unwrap_or(DEFAULT_SEED);
    let out_root = cli.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    let out = OutDir::create(&out_root)?;
    println!("seed {seed}, output {}", out_root.display());
    let params = Params {
        seed,
        resolution: cli.resolution.or(cfg.resolution),
        fiber: cli.fiber.or(cfg.fiber),
        samples: cli.samples.or(cfg.samples),
        level: cli.level.or(cfg.level).unwrap_or(0.0),
        cfg,
    };
    let mut checks = Checks::default();
    match cli.command {
        Command::Constants { n_max, q_max } => commands::constants(n_max, q_max, &out, &mut checks)?,
        Command::Verify { suite, tamper_theta_sign } => {
            let opts = verify::VerifyOptions { seed, tamper_theta_sign };
            verify::run(&suite, opts, &mut checks)?;
            let report = verify::Report {
                suite: &suite,
                seed,
                passed: checks.items.iter().filter(|c| c.pass).count(),
                failed: checks.failed().len(),
                checks: &checks.items,
            };
            out.json(&format!("verify_{suite}.json"), &report)?;
        }
        Command::Simulate => commands::simulate(&params, &out, &mut checks)?,
        Command::Variance => commands::variance(&params, &out, &mut checks)?,
        Command::Berry => commands::berry(&params, &out, &mut checks)?,
        Command::Nodal => commands::nodal(&params, &out, &mut checks)?,
    }
    let failed = checks.failed();
    if failed.is_empty() {
        println!("all {} checks passed", checks.items.len());
    } else {
        let names: Vec<String> = failed.iter().map(|c| format!("{}.{}", c.suite, c.name)).collect();
        println!("{} of {} checks failed: {}", failed.len(), checks.items.len(), names.join(", "));
    }
    Ok(checks.all_pass())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
