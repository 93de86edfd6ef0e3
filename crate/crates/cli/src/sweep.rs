use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Subcommand};
use ivbounds::benchmarks::DgpFamily;
use ivbounds::estimators::{
    gibbs_posterior_thresholded, plugin_bounds_default, quantile_interval, GibbsConfig, ModelKind, Stratification,
};
use ivbounds::eval::{
    calibration_curve, calibration_posteriors, d_proxy_stratification, jobs_analog_true_bounds, sensitivity_sweep,
    strength_sweep, trend_holds, Stat, Trend, CALIBRATION_LEVELS, SENSITIVITY_D_GRID, SENSITIVITY_N_GRID,
};
use ivbounds::rct2iv::fixtures::NswAnalog;
use ivbounds::rct2iv::presets::{jobs_config, read_jobs_table, star_config, star_snapshot, StarContrast, StarOutcome};
use ivbounds::rct2iv::{balance_arms, Conversion, ConversionConfig, RctTable};
use ivbounds::rng::derive_seed;
use ivbounds::{Interval, IvDataset};
use serde::Serialize;

use crate::config::{pick, ChainSection};
use crate::exit::config_err;
use crate::output::{emit, num, opt, Table};
use crate::Ctx;

#[derive(Debug, Subcommand)]
pub enum SweepCmd {
    /// Bound width across instrument strengths β.
    Strength(StrengthArgs),
    /// Gibbs width and coverage across sample size and stratification granularity.
    Sensitivity(SensitivityArgs),
    /// Empirical coverage of Gibbs quantile intervals across nominal levels.
    Calibration(CalibrationArgs),
}

#[derive(Debug, Args)]
pub struct ChainArgs {
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Threshold grid for the continuous outcome.
    #[arg(long)]
    thresholds: Option<usize>,
}

struct Chain {
    burn_in: usize,
    samples: usize,
    thresholds: usize,
}

impl ChainArgs {
    fn merge(&self, c: &ChainSection) -> Chain {
        Chain {
            burn_in: pick(self.burn_in, &c.burn_in, 500),
            samples: pick(self.samples, &c.samples, 2000),
            thresholds: pick(self.thresholds, &c.thresholds, 8),
        }
    }
}

impl Chain {
    fn posterior(
        &self,
        ds: &IvDataset,
        strat: &Stratification,
        seed: u64,
    ) -> ivbounds::Result<ivbounds::estimators::PosteriorHistogram> {
        let cfg = GibbsConfig {
            burn_in: self.burn_in,
            n_samples: self.samples,
            seed,
            ..Default::default()
        };
        gibbs_posterior_thresholded(ds, &cfg, strat, self.thresholds)
    }
}

#[derive(Debug, Args)]
pub struct StrengthArgs {
    /// Trial CSV; a synthetic NSW analog is drawn when absent.
    #[arg(long = "in")]
    input: Option<PathBuf>,
    /// jobs or star (with --in).
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, value_delimiter = ',')]
    betas: Option<Vec<f64>>,
    /// true (analog only), plugin or bayes.
    #[arg(long)]
    estimator: Option<String>,
    /// Rows of the synthetic analog.
    #[arg(long)]
    analog_n: Option<usize>,
    /// Replications per β (analog only).
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct StrengthRow {
    beta: f64,
    rho_zt: Stat,
    lower: Stat,
    upper: Stat,
    width: Stat,
}

#[derive(Debug, Serialize)]
struct StrengthReport {
    source: String,
    estimator: String,
    points: Vec<StrengthRow>,
    width_non_increasing: bool,
}

fn logged_analog(n: usize, seed: u64) -> Result<RctTable> {
    let mut t = NswAnalog::default().sample(n, seed).table;
    let cols = t.require_columns(&["re74", "re75"])?;
    for row in &mut t.x {
        for &j in &cols {
            row[j] = row[j].ln_1p();
        }
    }
    for y in &mut t.y {
        *y = y.ln_1p();
    }
    Ok(t)
}

fn run_strength(ctx: &Ctx, a: StrengthArgs) -> Result<()> {
    let c = &ctx.cfg.sweep.strength;
    let betas = pick(a.betas.clone(), &c.betas, vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0]);
    let analog = a.input.is_none();
    let estimator = pick(
        a.estimator.clone(),
        &c.estimator,
        if analog { "true".into() } else { "plugin".into() },
    );
    if estimator == "true" && !analog {
        return Err(config_err(
            "the true-bounds estimator needs the synthetic analog (omit --in)",
        ));
    }
    let reps = if analog { pick(a.seeds, &c.seeds, 10) } else { 1 };
    let nsw = NswAnalog::default();
    let estimate = |conv: &Conversion, seed: u64| -> ivbounds::Result<Interval> {
        match estimator.as_str() {
            "true" => Ok(jobs_analog_true_bounds(conv, &nsw, 200, 16, seed)?.interval),
            "plugin" => Ok(plugin_bounds_default(&conv.dataset, &ModelKind::Pooled)?.interval),
            "bayes" => {
                let chain = Chain {
                    burn_in: 500,
                    samples: 2000,
                    thresholds: 8,
                };
                quantile_interval(&chain.posterior(&conv.dataset, &Stratification::Pooled, seed)?, 0.01)
            }
            other => Err(ivbounds::Error::Config(format!(
                "unknown estimator '{other}' (true, plugin, bayes)"
            ))),
        }
    };

    let mut sweeps = Vec::with_capacity(reps);
    for r in 0..reps as u64 {
        let seed = derive_seed(ctx.seed, "sweep-strength", r, "table");
        let (table, config): (RctTable, Box<dyn Fn(f64) -> ConversionConfig>) =
            match (&a.input, a.preset.as_deref().or(c.preset.as_deref())) {
                (None, _) => (
                    logged_analog(pick(a.analog_n, &c.analog_n, 2000), seed)?,
                    Box::new(move |b| jobs_config(b, seed)),
                ),
                (Some(p), None | Some("jobs")) => (read_jobs_table(p)?, Box::new(move |b| jobs_config(b, seed))),
                (Some(p), Some("star")) => {
                    let snap = star_snapshot(p, StarContrast::SmallVsRegular, StarOutcome::Math)?;
                    (snap.table, Box::new(move |b| star_config(b, seed)))
                }
                (Some(_), Some(other)) => return Err(config_err(format!("unknown preset '{other}'"))),
            };
        let (balanced, _) = balance_arms(&table, derive_seed(seed, "sweep-strength", 0, "balance"))?;
        sweeps.push(strength_sweep(&balanced, config, &betas, |conv| estimate(conv, seed))?);
    }
    let points: Vec<StrengthRow> = betas
        .iter()
        .enumerate()
        .map(|(k, &beta)| {
            let col = |f: fn(&ivbounds::eval::StrengthPoint) -> f64| {
                Stat::of(&sweeps.iter().map(|s| f(&s[k])).collect::<Vec<_>>())
            };
            StrengthRow {
                beta,
                rho_zt: col(|p| p.rho_zt),
                lower: col(|p| p.interval.lower()),
                upper: col(|p| p.interval.upper()),
                width: col(|p| p.width),
            }
        })
        .collect();
    let widths: Vec<Stat> = points.iter().map(|p| p.width).collect();
    let report = StrengthReport {
        source: a
            .input
            .as_ref()
            .map_or("nsw-analog".into(), |p| p.display().to_string()),
        estimator,
        width_non_increasing: trend_holds(&widths, Trend::NonIncreasing),
        points,
    };
    emit(
        &report,
        || {
            let mut t = Table::new(&["beta", "rho_zt", "lower", "upper", "width_mean", "width_ste"]);
            for p in &report.points {
                t.push(vec![
                    num(p.beta),
                    num(p.rho_zt.mean),
                    num(p.lower.mean),
                    num(p.upper.mean),
                    num(p.width.mean),
                    opt(p.width.ste),
                ]);
            }
            Ok(t)
        },
        ctx.format,
        a.report.as_deref(),
    )
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    family: Option<DgpFamily>,
    /// Datasets per grid cell.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    d_grid: Option<Vec<usize>>,
    /// Sample size of the dimension sweep.
    #[arg(long)]
    n_fixed: Option<usize>,
    /// Dimension of the sample-size sweep.
    #[arg(long)]
    d_fixed: Option<usize>,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct SensitivityOut {
    #[serde(flatten)]
    report: ivbounds::eval::SensitivityReport,
    width_non_increasing_in_n: bool,
    width_non_decreasing_in_d: bool,
    min_coverage: f64,
}

fn run_sensitivity(ctx: &Ctx, a: SensitivityArgs) -> Result<()> {
    let c = &ctx.cfg.sweep.sensitivity;
    let chain = a.chain.merge(&c.chain);
    let n_grid = pick(a.n_grid.clone(), &c.n_grid, SENSITIVITY_N_GRID.to_vec());
    let d_grid = pick(a.d_grid.clone(), &c.d_grid, SENSITIVITY_D_GRID.to_vec());
    let estimator = |ds: &IvDataset, seed: u64| chain.posterior(ds, &d_proxy_stratification(ds.d), seed);
    let report = sensitivity_sweep(
        pick(a.family, &c.family, DgpFamily::Linear),
        &n_grid,
        &d_grid,
        (pick(a.n_fixed, &c.n_fixed, 1024), pick(a.d_fixed, &c.d_fixed, 5)),
        pick(a.seeds, &c.seeds, 30),
        pick(a.alpha, &c.alpha, 0.1),
        ctx.seed,
        &estimator,
    )?;
    let widths = |cells: &[ivbounds::eval::SensitivityCell]| cells.iter().map(|c| c.norm_width).collect::<Vec<_>>();
    let out = SensitivityOut {
        width_non_increasing_in_n: trend_holds(&widths(&report.n_sweep), Trend::NonIncreasing),
        width_non_decreasing_in_d: trend_holds(&widths(&report.d_sweep), Trend::NonDecreasing),
        min_coverage: report
            .n_sweep
            .iter()
            .chain(&report.d_sweep)
            .map(|c| c.coverage.mean)
            .fold(f64::INFINITY, f64::min),
        report,
    };
    emit(
        &out,
        || {
            let mut t = Table::new(&[
                "sweep",
                "n",
                "d",
                "coverage_mean",
                "coverage_ste",
                "norm_width_mean",
                "norm_width_ste",
            ]);
            for (name, cells) in [("n", &out.report.n_sweep), ("d", &out.report.d_sweep)] {
                for c in cells {
                    t.push(vec![
                        name.into(),
                        c.n.to_string(),
                        c.d.to_string(),
                        num(c.coverage.mean),
                        opt(c.coverage.ste),
                        num(c.norm_width.mean),
                        opt(c.norm_width.ste),
                    ]);
                }
            }
            Ok(t)
        },
        ctx.format,
        a.report.as_deref(),
    )
}

#[derive(Debug, Args)]
pub struct CalibrationArgs {
    #[arg(long)]
    family: Option<DgpFamily>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// Nominal levels 1 − α; a fixed grid from 0.01 to 0.995 by default.
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<f64>>,
    /// d-proxy stratification instead of a pooled chain.
    #[arg(long)]
    stratified: bool,
    #[command(flatten)]
    chain: ChainArgs,
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct CalibrationOut {
    family: DgpFamily,
    n: usize,
    d: usize,
    seeds: usize,
    points: Vec<ivbounds::eval::CalibrationPoint>,
}

fn run_calibration(ctx: &Ctx, a: CalibrationArgs) -> Result<()> {
    let c = &ctx.cfg.sweep.calibration;
    let chain = a.chain.merge(&c.chain);
    let levels = pick(a.levels.clone(), &c.levels, CALIBRATION_LEVELS.to_vec());
    if let Some(l) = levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(config_err(format!("calibration level {l} outside (0, 1)")));
    }
    let (family, n, d, k) = (
        pick(a.family, &c.family, DgpFamily::Linear),
        pick(a.n, &c.n, 1024),
        pick(a.d, &c.d, 5),
        pick(a.seeds, &c.seeds, 50),
    );
    let strat = |ds: &IvDataset| {
        if a.stratified {
            d_proxy_stratification(ds.d)
        } else {
            Stratification::Pooled
        }
    };
    let estimator = |ds: &IvDataset, seed: u64| chain.posterior(ds, &strat(ds), seed);
    let posts = calibration_posteriors(family, n, d, k, ctx.seed, &estimator)?;
    let out = CalibrationOut {
        family,
        n,
        d,
        seeds: k,
        points: calibration_curve(&posts, &levels)?,
    };
    emit(
        &out,
        || {
            let mut t = Table::new(&["level", "coverage_mean", "coverage_ste"]);
            for p in &out.points {
                t.push(vec![num(p.level), num(p.coverage.mean), opt(p.coverage.ste)]);
            }
            Ok(t)
        },
        ctx.format,
        a.report.as_deref(),
    )
}

pub fn run(ctx: &Ctx, cmd: SweepCmd) -> Result<()> {
    match cmd {
        SweepCmd::Strength(a) => run_strength(ctx, a),
        SweepCmd::Sensitivity(a) => run_sensitivity(ctx, a),
        SweepCmd::Calibration(a) => run_calibration(ctx, a),
    }
}
