//! `ivb`: benchmark generation, RCT conversion, bounds, estimation and evaluation.

mod bounds;
mod config;
mod convert;
mod evaluate;
mod exit;
mod gen;
mod output;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use config::{pick, RunConfig};
use output::Format;

#[derive(Debug, Parser)]
#[command(
    name = "ivb",
    version,
    about = "Partial identification bounds for binary-instrument studies"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, help_heading = "Global options")]
    config: Option<PathBuf>,
    /// Global seed. Every randomized step derives its own stream from it.
    #[arg(long, global = true, help_heading = "Global options")]
    seed: Option<u64>,
    /// Output directory [env: IVB_OUT_DIR, default: ivb-out].
    #[arg(long, global = true, help_heading = "Global options")]
    out: Option<PathBuf>,
    /// Worker threads for seed and grid parallelism (default: all cores).
    #[arg(long, global = true, help_heading = "Global options")]
    workers: Option<usize>,
    /// Report format on stdout.
    #[arg(long, global = true, help_heading = "Global options", value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate benchmark datasets.
    #[command(subcommand)]
    Gen(gen::GenCmd),
    /// Convert an RCT into an observational IV dataset.
    #[command(subcommand)]
    Convert(convert::ConvertCmd),
    /// Sharp bounds from sidecar strata, or from estimated probabilities.
    Bounds(bounds::BoundsArgs),
    /// Interval estimate with the plug-in or Bayesian method.
    Estimate(bounds::EstimateArgs),
    /// Score methods over a set of seeds.
    Eval(evaluate::EvalArgs),
    /// Parameter sweeps.
    #[command(subcommand)]
    Sweep(sweep::SweepCmd),
}

/// Shared per-run settings after config and flags are merged.
pub struct Ctx {
    pub cfg: RunConfig,
    pub seed: u64,
    pub out: PathBuf,
    pub format: Format,
}

fn run(cli: Cli) -> Result<()> {
    let cfg = RunConfig::load_opt(cli.config.as_deref())?;
    let workers = pick(cli.workers, &cfg.workers, 0);
    if workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .context("starting the worker pool")?;
    }
    let ctx = Ctx {
        seed: pick(cli.seed, &cfg.seed, 0),
        out: cfg.out_dir(cli.out.as_deref()),
        format: cli.format,
        cfg,
    };
    match cli.cmd {
        Command::Gen(c) => gen::run(&ctx, c),
        Command::Convert(c) => convert::run(&ctx, c),
        Command::Bounds(a) => bounds::run_bounds(&ctx, a),
        Command::Estimate(a) => bounds::run_estimate(&ctx, a),
        Command::Eval(a) => evaluate::run(&ctx, a),
        Command::Sweep(c) => sweep::run(&ctx, c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e) as u8)
        }
    }
}
