use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use ivbounds::rct2iv::presets::{jobs_pipeline, star_pipeline, StarContrast, StarOutcome};
use ivbounds::rct2iv::{balance_arms, convert, Conversion, ConversionConfig, RctTable};
use ivbounds::rng::derive_seed;
use serde::Serialize;

use crate::config::pick;
use crate::exit::config_err;
use crate::output::{emit, num, to_json, write_file, Table};
use crate::Ctx;

#[derive(Debug, Subcommand)]
pub enum ConvertCmd {
    /// Accept-reject conversion of a randomized trial.
    Rct(RctArgs),
}

#[derive(Debug, Args)]
pub struct RctArgs {
    /// Trial CSV with a header row.
    #[arg(long = "in")]
    input: PathBuf,
    /// jobs or star.
    #[arg(long)]
    preset: Option<String>,
    /// Custom JSON conversion config, used without a preset.
    #[arg(long)]
    conversion: Option<PathBuf>,
    #[arg(long)]
    beta: Option<f64>,
    /// Comma-separated β values; one output set per value.
    #[arg(long, value_delimiter = ',')]
    beta_sweep: Option<Vec<f64>>,
    /// Treatment column for custom conversions.
    #[arg(long)]
    treatment: Option<String>,
    /// Outcome column for custom conversions.
    #[arg(long)]
    outcome: Option<String>,
    /// small-vs-regular or aide-vs-regular.
    #[arg(long)]
    star_contrast: Option<String>,
    /// math or reading.
    #[arg(long)]
    star_outcome: Option<String>,
    /// Stem of the output files.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Serialize)]
struct Output {
    beta: f64,
    csv: String,
    sidecar: String,
    report: String,
    n_accepted: usize,
    rho_zt: f64,
    pate_label: f64,
}

enum Source {
    Jobs,
    Star(StarContrast, StarOutcome),
    Custom(Box<RctTable>, ConversionConfig),
}

fn source(ctx: &Ctx, a: &RctArgs) -> Result<Source> {
    let c = &ctx.cfg.convert;
    let preset = a.preset.clone().or_else(|| c.preset.clone());
    match preset.as_deref() {
        Some("jobs") => Ok(Source::Jobs),
        Some("star") => {
            let contrast = pick(a.star_contrast.clone(), &c.star_contrast, "small-vs-regular".into());
            let outcome = pick(a.star_outcome.clone(), &c.star_outcome, "math".into());
            Ok(Source::Star(contrast.parse()?, outcome.parse()?))
        }
        Some(other) => Err(config_err(format!("unknown preset '{other}' (jobs, star)"))),
        None => {
            let cfg = match (&a.conversion, &c.conversion) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str::<ConversionConfig>(&text)
                        .map_err(|e| config_err(format!("conversion config {}: {e}", path.display())))?
                }
                (None, Some(cfg)) => cfg.clone(),
                (None, None) => return Err(config_err("convert rct needs --preset or a conversion config")),
            };
            cfg.validate()?;
            let treatment = pick(a.treatment.clone(), &c.treatment, "treat".into());
            let outcome = pick(a.outcome.clone(), &c.outcome, "y".into());
            let cols: Vec<&str> = cfg
                .observed_cols
                .iter()
                .chain(&cfg.hidden_cols)
                .map(String::as_str)
                .collect();
            let table = RctTable::read_csv(&a.input, &cols, &treatment, &outcome)?;
            Ok(Source::Custom(Box::new(table), cfg))
        }
    }
}

fn run_one(ctx: &Ctx, a: &RctArgs, src: &Source, beta: f64) -> Result<Conversion> {
    Ok(match src {
        Source::Jobs => jobs_pipeline(&a.input, beta, ctx.seed)?,
        Source::Star(contrast, outcome) => star_pipeline(&a.input, *contrast, *outcome, beta, ctx.seed)?,
        Source::Custom(table, cfg) => {
            let (balanced, _) = balance_arms(table, derive_seed(ctx.seed, "convert", 0, "balance"))?;
            let cfg = ConversionConfig {
                beta,
                seed: derive_seed(ctx.seed, "convert", 0, "convert"),
                ..cfg.clone()
            };
            convert(&balanced, &cfg)?
        }
    })
}

pub fn run(ctx: &Ctx, cmd: ConvertCmd) -> Result<()> {
    let ConvertCmd::Rct(a) = cmd;
    let c = &ctx.cfg.convert;
    let src = source(ctx, &a)?;
    let default_beta = match &src {
        Source::Custom(_, cfg) => cfg.beta,
        _ => 2.0,
    };
    let betas = match (a.beta_sweep.clone().or_else(|| c.betas.clone()), a.beta) {
        (Some(_), Some(_)) => return Err(config_err("--beta and --beta-sweep are exclusive")),
        (Some(b), None) if b.is_empty() => return Err(config_err("empty beta sweep")),
        (Some(b), None) => b,
        (None, b) => vec![pick(b, &c.beta, default_beta)],
    };
    let stem = a
        .name
        .clone()
        .unwrap_or_else(|| a.preset.clone().or_else(|| c.preset.clone()).unwrap_or("rct".into()));
    let sweep = betas.len() > 1;
    let mut outputs = Vec::new();
    for &beta in &betas {
        let conv = run_one(ctx, &a, &src, beta)?;
        let name = if sweep {
            format!("{stem}_beta{beta}")
        } else {
            stem.clone()
        };
        let (csv, sidecar) = conv.dataset.save(&ctx.out, &name)?;
        let report = ctx.out.join(format!("{name}_report.json"));
        write_file(&report, &to_json(&conv.report)?)?;
        outputs.push(Output {
            beta,
            csv: csv.display().to_string(),
            sidecar: sidecar.display().to_string(),
            report: report.display().to_string(),
            n_accepted: conv.report.n_accepted,
            rho_zt: conv.report.rho_zt,
            pate_label: conv.report.pate_label,
        });
    }
    emit(
        &outputs,
        || {
            let mut t = Table::new(&["beta", "csv", "report", "n_accepted", "rho_zt", "pate_label"]);
            for o in &outputs {
                t.push(vec![
                    num(o.beta),
                    o.csv.clone(),
                    o.report.clone(),
                    o.n_accepted.to_string(),
                    num(o.rho_zt),
                    num(o.pate_label),
                ]);
            }
            Ok(t)
        },
        ctx.format,
        None,
    )
}
