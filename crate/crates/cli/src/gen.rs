use std::path::Path;

use anyhow::Result;
use clap::{Args, Subcommand};
use ivbounds::benchmarks::{gen_binary_benchmark, gen_calib_dgp, BinaryBenchConfig, CalibDgpConfig, DgpFamily};
use ivbounds::prior::{draw_dgp, sample_dataset, PriorConfig};
use ivbounds::rct2iv::fixtures::{write_nsw_csv, NswAnalog, StarAnalog};
use ivbounds::rng::derive_seed;
use ivbounds::IvDataset;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::pick;
use crate::output::{emit, num, opt, to_json, write_file, Table};
use crate::Ctx;

#[derive(Debug, Subcommand)]
pub enum GenCmd {
    /// Datasets from the stratum prior.
    Prior(PriorArgs),
    /// The binary-outcome benchmark with exact label bounds.
    Binary(BinaryArgs),
    /// Continuous-outcome calibration datasets.
    Calib(CalibArgs),
    /// NSW-layout RCT with known potential outcomes (input for `convert rct`).
    NswAnalog(FixtureArgs),
    /// STAR-layout RCT file (input for `convert rct --preset star`).
    StarAnalog(FixtureArgs),
}

#[derive(Debug, Args)]
pub struct PriorArgs {
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d_min: Option<usize>,
    #[arg(long)]
    d_max: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Skip the log-domain recentering step.
    #[arg(long)]
    no_recenter: bool,
}

#[derive(Debug, Args)]
pub struct BinaryArgs {
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Fixed covariate dimension; drawn per dataset when absent.
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CalibArgs {
    /// linear, poly or deepnl.
    #[arg(long)]
    family: Option<DgpFamily>,
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
}

#[derive(Debug, Args)]
pub struct FixtureArgs {
    #[arg(long, default_value_t = 2000)]
    n: usize,
    /// File name inside the output directory.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    index: usize,
    csv: String,
    sidecar: String,
    seed: u64,
    n: usize,
    d: usize,
    sate: Option<f64>,
    lower: Option<f64>,
    upper: Option<f64>,
}

fn save_all(ctx: &Ctx, stem: &str, datasets: Vec<IvDataset>) -> Result<()> {
    let entries = datasets
        .iter()
        .enumerate()
        .map(|(i, ds)| {
            let (csv, json) = ds.save(&ctx.out, &format!("{stem}_{i:04}"))?;
            let l = ds.labels;
            Ok(ManifestEntry {
                index: i,
                csv: csv.display().to_string(),
                sidecar: json.display().to_string(),
                seed: ds.seed,
                n: ds.n(),
                d: ds.d,
                sate: l.map(|l| l.sate),
                lower: l.and_then(|l| l.lower),
                upper: l.and_then(|l| l.upper),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let table = || {
        let mut t = Table::new(&["index", "csv", "seed", "n", "d", "sate", "lower", "upper"]);
        for e in &entries {
            t.push(vec![
                e.index.to_string(),
                e.csv.clone(),
                e.seed.to_string(),
                e.n.to_string(),
                e.d.to_string(),
                opt(e.sate),
                opt(e.lower),
                opt(e.upper),
            ]);
        }
        Ok(t)
    };
    write_file(&ctx.out.join(format!("{stem}_manifest.json")), &to_json(&entries)?)?;
    emit(&entries, table, ctx.format, None)
}

pub fn run(ctx: &Ctx, cmd: GenCmd) -> Result<()> {
    let g = &ctx.cfg.gen;
    match cmd {
        GenCmd::Prior(a) => {
            let base = PriorConfig::default();
            let cfg = PriorConfig {
                n: pick(a.n, &g.prior.n, base.n),
                d_min: pick(a.d_min, &g.prior.d_min, base.d_min),
                d_max: pick(a.d_max, &g.prior.d_max, base.d_max),
                gamma: pick(a.gamma, &g.prior.gamma, base.gamma),
                recenter: if a.no_recenter {
                    false
                } else {
                    pick(None, &g.prior.recenter, true)
                },
                target: None,
            };
            cfg.validate()?;
            let count = pick(a.count, &g.prior.count, 1);
            let datasets = (0..count as u64)
                .into_par_iter()
                .map(|i| {
                    let dgp = draw_dgp(derive_seed(ctx.seed, "gen-prior", i, "dgp"), &cfg)?;
                    Ok(sample_dataset(&dgp, derive_seed(ctx.seed, "gen-prior", i, "sample"))?)
                })
                .collect::<Result<Vec<_>>>()?;
            save_all(ctx, "prior", datasets)
        }
        GenCmd::Binary(a) => {
            let n = pick(a.n, &g.binary.n, BinaryBenchConfig::default().n);
            let d = a.d.or(g.binary.d);
            let count = pick(a.count, &g.binary.count, 1);
            let datasets = (0..count as u64)
                .into_par_iter()
                .map(|i| {
                    let cfg = BinaryBenchConfig {
                        n,
                        d,
                        seed: derive_seed(ctx.seed, "gen-binary", i, "dataset"),
                    };
                    Ok(gen_binary_benchmark(&cfg)?.0)
                })
                .collect::<Result<Vec<_>>>()?;
            save_all(ctx, "binary", datasets)
        }
        GenCmd::Calib(a) => {
            let c = &g.calib;
            let family = pick(a.family, &c.family, DgpFamily::Linear);
            let mut base = CalibDgpConfig::new(family, pick(a.n, &c.n, 1024), pick(a.d, &c.d, 5), 0);
            base.a = pick(None, &c.a, base.a);
            base.gamma_t = pick(None, &c.gamma_t, base.gamma_t);
            base.gamma_y = pick(None, &c.gamma_y, base.gamma_y);
            base.sigma_y = pick(None, &c.sigma_y, base.sigma_y);
            base.clip = pick(None, &c.clip, base.clip);
            base.validate()?;
            let count = pick(a.count, &c.count, 1);
            let datasets = (0..count as u64)
                .into_par_iter()
                .map(|i| {
                    let cfg = CalibDgpConfig {
                        seed: derive_seed(ctx.seed, "gen-calib", i, "dataset"),
                        ..base.clone()
                    };
                    Ok(gen_calib_dgp(&cfg)?)
                })
                .collect::<Result<Vec<_>>>()?;
            save_all(ctx, "calib", datasets)
        }
        GenCmd::NswAnalog(a) => {
            let path = ctx.out.join(a.name.unwrap_or_else(|| "nsw_analog.csv".into()));
            std::fs::create_dir_all(&ctx.out)?;
            let rct = NswAnalog::default().sample(a.n, derive_seed(ctx.seed, "gen-nsw", 0, "table"));
            write_nsw_csv(&rct, &path)?;
            report_fixture(
                ctx,
                &path,
                rct.table.n(),
                Some(ivbounds::sampling::mean(&rct.effects())),
            )
        }
        GenCmd::StarAnalog(a) => {
            let path = ctx.out.join(a.name.unwrap_or_else(|| "star_analog.csv".into()));
            std::fs::create_dir_all(&ctx.out)?;
            StarAnalog::default().write_csv(a.n, derive_seed(ctx.seed, "gen-star", 0, "table"), &path)?;
            report_fixture(ctx, &path, a.n, None)
        }
    }
}

fn report_fixture(ctx: &Ctx, path: &Path, n: usize, pate: Option<f64>) -> Result<()> {
    #[derive(Serialize)]
    struct Fixture {
        csv: String,
        n: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        sample_ate: Option<f64>,
    }
    let f = Fixture {
        csv: path.display().to_string(),
        n,
        sample_ate: pate,
    };
    emit(
        &f,
        || {
            let mut t = Table::new(&["csv", "n", "sample_ate"]);
            t.push(vec![f.csv.clone(), n.to_string(), pate.map(num).unwrap_or_default()]);
            Ok(t)
        },
        ctx.format,
        None,
    )
}
