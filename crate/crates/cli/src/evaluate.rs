use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use ivbounds::benchmarks::{gen_binary_benchmark, gen_calib_dgp, BinaryBenchConfig, CalibDgpConfig, DgpFamily};
use ivbounds::eval::{aggregate, evaluate, score, write_aggregate_csv, EvalRecord, EvalReport, Method, TimingProtocol};
use ivbounds::prior::{draw_dgp, sample_dataset, PriorConfig};
use ivbounds::rng::derive_seed;
use ivbounds::IvDataset;
use rayon::prelude::*;

use crate::bounds::{build_method, MethodName};
use crate::config::pick;
use crate::exit::config_err;
use crate::output::{to_json, write_file};
use crate::Ctx;

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Number of generated datasets (ignored with --in).
    #[arg(long)]
    seeds: Option<usize>,
    /// Comma-separated method names: plugin, bayes.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<MethodName>>,
    /// binary, prior, or calib:FAMILY.
    #[arg(long)]
    benchmark: Option<String>,
    /// Rows per generated dataset.
    #[arg(long)]
    n: Option<usize>,
    /// Labeled dataset CSVs to evaluate instead of generated ones.
    #[arg(long = "in", num_args = 1..)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Threshold grid for Bayes on continuous outcomes.
    #[arg(long)]
    thresholds: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Measure wall time (median of three runs after a warm-up, one worker).
    /// Timed outputs are not byte-reproducible and run datasets sequentially.
    #[arg(long)]
    timing: bool,
}

fn generate(benchmark: &str, n: Option<usize>, seed: u64) -> Result<IvDataset> {
    Ok(match benchmark.split_once(':') {
        None if benchmark == "binary" => {
            gen_binary_benchmark(&BinaryBenchConfig {
                n: n.unwrap_or(2048),
                d: None,
                seed,
            })?
            .0
        }
        None if benchmark == "prior" => {
            let cfg = PriorConfig {
                n: n.unwrap_or(1024),
                ..Default::default()
            };
            sample_dataset(&draw_dgp(seed, &cfg)?, derive_seed(seed, "eval", 0, "sample"))?
        }
        Some(("calib", fam)) => {
            let family: DgpFamily = fam.parse()?;
            gen_calib_dgp(&CalibDgpConfig::new(family, n.unwrap_or(1024), 5, seed))?
        }
        _ => {
            return Err(config_err(format!(
                "unknown benchmark '{benchmark}' (binary, prior, calib:FAMILY)"
            )))
        }
    })
}

fn record(method: &Method, ds: &IvDataset, index: u64, timing: bool) -> Result<EvalRecord> {
    if timing {
        return Ok(evaluate(method, ds, index, &TimingProtocol::default())?);
    }
    let m = method.with_seed(derive_seed(index, "eval", 0, method.name()));
    Ok(score(method.name(), index, m.run(ds)?.interval, ds, 0.0)?)
}

pub fn run(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let c = &ctx.cfg.eval;
    let methods: Vec<Method> = match (&a.methods, &c.methods) {
        (Some(names), base) => names
            .iter()
            .map(|&name| {
                let base = base.as_ref().and_then(|ms| {
                    ms.iter()
                        .find(|m| m.name() == if name == MethodName::Plugin { "plugin" } else { "bayes" })
                });
                let (alpha, samples, burn_in, thresholds) = match name {
                    MethodName::Bayes => (a.alpha, a.samples, a.burn_in, a.thresholds),
                    MethodName::Plugin => (None, None, None, None),
                };
                build_method(name, base, alpha, None, None, thresholds, None, samples, burn_in)
            })
            .collect::<Result<_>>()?,
        (None, Some(ms)) => ms.clone(),
        (None, None) => vec![Method::plugin(ivbounds::estimators::ModelKind::Pooled)],
    };
    let mut seen = std::collections::BTreeSet::new();
    if let Some(m) = methods.iter().find(|m| !seen.insert(m.name())) {
        return Err(config_err(format!("method '{}' listed twice", m.name())));
    }
    let timing = a.timing || c.timing.unwrap_or(false);
    let benchmark = pick(a.benchmark.clone(), &c.benchmark, "binary".into());

    let load = |i: usize| -> Result<IvDataset> {
        if a.inputs.is_empty() {
            generate(
                &benchmark,
                a.n.or(c.n),
                derive_seed(ctx.seed, "eval", i as u64, "dataset"),
            )
        } else {
            Ok(IvDataset::load(&a.inputs[i])?)
        }
    };
    let count = if a.inputs.is_empty() {
        pick(a.seeds, &c.seeds, 10)
    } else {
        a.inputs.len()
    };
    let per_dataset = |i: usize| -> Result<Vec<EvalRecord>> {
        let ds = load(i)?;
        methods.iter().map(|m| record(m, &ds, i as u64, timing)).collect()
    };
    let nested: Vec<Vec<EvalRecord>> = if timing {
        (0..count).map(per_dataset).collect::<Result<_>>()?
    } else {
        (0..count).into_par_iter().map(per_dataset).collect::<Result<_>>()?
    };
    let records: Vec<EvalRecord> = nested.into_iter().flatten().collect();
    let agg = aggregate(&records);
    let report = EvalReport {
        benchmark: if a.inputs.is_empty() { benchmark } else { "files".into() },
        methods: methods.iter().map(|m| m.name().to_string()).collect(),
        aggregate: agg.clone(),
        records,
        sweeps: None,
    };

    let mut csv = Vec::new();
    write_aggregate_csv(&agg, &mut csv)?;
    let csv = String::from_utf8(csv)?;
    write_file(&ctx.out.join("eval_report.json"), &to_json(&report)?)?;
    write_file(&ctx.out.join("eval_aggregate.csv"), &csv)?;
    for r in &agg {
        let time = if timing {
            format!("  time/1k {}s", r.time_per_1k_s)
        } else {
            String::new()
        };
        eprintln!(
            "{:<8} seeds {:>3}  validity {}  norm width {}{time}",
            r.method, r.n_seeds, r.validity, r.norm_width
        );
    }
    match ctx.format {
        crate::output::Format::Json => print!("{}", to_json(&report)?),
        crate::output::Format::Csv => print!("{csv}"),
    }
    Ok(())
}
