use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, ValueEnum};
use ivbounds::bounds::{sate_bounds_from_probs, threshold_grid, DEFAULT_THRESHOLDS};
use ivbounds::estimators::{fit_condprob_model, GibbsConfig, ModelKind, Stratification};
use ivbounds::eval::Method;
use ivbounds::lp::lp_bounds;
use ivbounds::rng::derive_seed;
use ivbounds::strata::strata_to_condprobs;
use ivbounds::{CondProbs, Interval, IvDataset, Labels};
use serde::Serialize;

use crate::config::pick;
use crate::exit::config_err;
use crate::output::{emit, num, opt, Table};
use crate::Ctx;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundsMethod {
    Closed,
    Lp,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: Option<BoundsMethod>,
    /// pooled or logistic; used when the dataset carries no strata.
    #[arg(long)]
    model: Option<String>,
    /// Threshold grid size for continuous outcomes.
    #[arg(long)]
    thresholds: Option<usize>,
    /// Also write the report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

pub fn parse_model(s: &str) -> Result<ModelKind> {
    match s {
        "pooled" => Ok(ModelKind::Pooled),
        "logistic" | "multinomial-logistic" => Ok(ModelKind::MultinomialLogistic),
        other => Ok(ModelKind::Stratified {
            stratification: parse_stratification(other)?,
        }),
    }
}

/// `pooled`, `signs:K`, `discrete:C1,C2` or `binned:COL:E1,E2`.
pub fn parse_stratification(s: &str) -> Result<Stratification> {
    let bad = || config_err(format!("cannot parse stratification '{s}'"));
    let ints = |v: &str| {
        v.split(',')
            .map(|c| c.trim().parse::<usize>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()
    };
    let mut parts = s.splitn(3, ':');
    match (parts.next(), parts.next(), parts.next()) {
        (Some("pooled"), None, None) => Ok(Stratification::Pooled),
        (Some("signs"), Some(k), None) => Ok(Stratification::Signs {
            k: k.parse().map_err(|_| bad())?,
        }),
        (Some("discrete"), Some(cols), None) => Ok(Stratification::Discrete { cols: ints(cols)? }),
        (Some("binned"), Some(col), Some(edges)) => Ok(Stratification::Binned {
            col: col.parse().map_err(|_| bad())?,
            edges: edges
                .split(',')
                .map(|e| e.trim().parse::<f64>().map_err(|_| bad()))
                .collect::<Result<_>>()?,
        }),
        _ => Err(bad()),
    }
}

fn lp_sate_bounds(probs: &[CondProbs]) -> Result<(Interval, usize)> {
    if probs.is_empty() {
        return Err(ivbounds::Error::Data("cannot bound the SATE of an empty dataset".into()).into());
    }
    let (mut lo, mut hi, mut crossed) = (0.0, 0.0, 0);
    for p in probs {
        match lp_bounds(p)? {
            Some(i) => {
                lo += i.lower();
                hi += i.upper();
            }
            // Same Manski clipping as the closed form.
            None => {
                crossed += 1;
                lo -= 1.0;
                hi += 1.0;
            }
        }
    }
    let n = probs.len() as f64;
    Ok((Interval::new(lo / n, hi / n)?, crossed))
}

fn row_bounds(probs: &[CondProbs], method: BoundsMethod) -> Result<(Interval, usize)> {
    match method {
        BoundsMethod::Closed => {
            let b = sate_bounds_from_probs(probs)?;
            Ok((b.interval, b.crossed_rows))
        }
        BoundsMethod::Lp => lp_sate_bounds(probs),
    }
}

fn predicted(ds: &IvDataset, kind: &ModelKind) -> Result<Vec<CondProbs>> {
    let model = fit_condprob_model(ds, kind)?;
    Ok(ds
        .rows
        .iter()
        .map(|r| model.predict(&r.x))
        .collect::<ivbounds::Result<_>>()?)
}

#[derive(Debug, Serialize)]
struct BoundsReport {
    input: String,
    method: BoundsMethod,
    /// `strata` when the sidecar carries the true strata, else `estimated`.
    source: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<ModelKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    thresholds: Option<usize>,
    interval: Interval,
    crossed_rows: usize,
    n_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Labels>,
}

pub fn run_bounds(ctx: &Ctx, a: BoundsArgs) -> Result<()> {
    let c = &ctx.cfg.bounds;
    let method = match (a.method, c.method.as_deref()) {
        (Some(m), _) => m,
        (None, Some(s)) => {
            BoundsMethod::from_str(s, true).map_err(|_| config_err(format!("unknown bounds method '{s}'")))?
        }
        (None, None) => BoundsMethod::Closed,
    };
    let ds = IvDataset::load(&a.input)?;
    let mut report = BoundsReport {
        input: a.input.display().to_string(),
        method,
        source: "strata",
        model: None,
        thresholds: None,
        interval: Interval::point(0.0)?,
        crossed_rows: 0,
        n_rows: ds.n(),
        labels: ds.labels,
    };
    if let Some(strata) = &ds.strata {
        let probs: Vec<CondProbs> = strata.iter().map(strata_to_condprobs).collect();
        (report.interval, report.crossed_rows) = row_bounds(&probs, method)?;
    } else {
        let kind = match a.model.as_deref() {
            Some(s) => parse_model(s)?,
            None => c.model.clone().unwrap_or(ModelKind::Pooled),
        };
        report.source = "estimated";
        if ds.is_binary_outcome() {
            (report.interval, report.crossed_rows) = row_bounds(&predicted(&ds, &kind)?, method)?;
        } else {
            let j = pick(a.thresholds, &c.thresholds, DEFAULT_THRESHOLDS);
            if j < 2 {
                return Err(config_err("threshold grid needs at least 2 points"));
            }
            let (mut lo, mut hi) = (0.0, 0.0);
            for s in threshold_grid(j) {
                let (i, crossed) = row_bounds(&predicted(&ds.binarized(s), &kind)?, method)?;
                lo += i.lower();
                hi += i.upper();
                report.crossed_rows += crossed;
            }
            report.interval = Interval::new(lo / j as f64, hi / j as f64)?;
            report.thresholds = Some(j);
        }
        report.model = Some(kind);
    }
    emit(
        &report,
        || {
            let mut t = Table::new(&[
                "input",
                "method",
                "source",
                "lower",
                "upper",
                "crossed_rows",
                "n_rows",
                "sate",
            ]);
            t.push(vec![
                report.input.clone(),
                format!("{method:?}").to_lowercase(),
                report.source.into(),
                num(report.interval.lower()),
                num(report.interval.upper()),
                report.crossed_rows.to_string(),
                report.n_rows.to_string(),
                opt(report.labels.map(|l| l.sate)),
            ]);
            Ok(t)
        },
        ctx.format,
        a.report.as_deref(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodName {
    Plugin,
    Bayes,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: Option<MethodName>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Plug-in model: pooled, logistic, or a stratification spec.
    #[arg(long)]
    model: Option<String>,
    /// Gibbs stratification: pooled, signs:K, discrete:C1,C2, binned:COL:E1,E2.
    #[arg(long)]
    stratify: Option<String>,
    /// Threshold grid for continuous outcomes.
    #[arg(long)]
    thresholds: Option<usize>,
    /// Binarize the outcome as 1{y >= s} before the Gibbs sampler.
    #[arg(long)]
    binarize: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Omit the posterior histogram from the report.
    #[arg(long)]
    no_histogram: bool,
    /// Also write the report here.
    #[arg(long)]
    report: Option<PathBuf>,
}

/// Builds a method from its name plus flag overrides on top of `base`.
#[allow(clippy::too_many_arguments)]
pub fn build_method(
    name: MethodName,
    base: Option<&Method>,
    alpha: Option<f64>,
    model: Option<&str>,
    stratify: Option<&str>,
    thresholds: Option<usize>,
    binarize: Option<f64>,
    samples: Option<usize>,
    burn_in: Option<usize>,
) -> Result<Method> {
    let mut m = match (name, base) {
        (MethodName::Plugin, Some(b @ Method::Plugin { .. })) | (MethodName::Bayes, Some(b @ Method::Bayes { .. })) => {
            b.clone()
        }
        (MethodName::Plugin, _) => Method::plugin(ModelKind::Pooled),
        (MethodName::Bayes, _) => Method::bayes(GibbsConfig::default(), Stratification::Pooled, 0.01),
    };
    match &mut m {
        Method::Plugin {
            model: mk,
            thresholds: j,
        } => {
            if stratify.is_some() || binarize.is_some() || samples.is_some() || burn_in.is_some() {
                return Err(config_err(
                    "--stratify, --binarize, --samples and --burn-in apply to bayes only",
                ));
            }
            if let Some(s) = model {
                *mk = parse_model(s)?;
            }
            if let Some(t) = thresholds {
                *j = t;
            }
        }
        Method::Bayes {
            gibbs,
            stratification,
            alpha: a,
            thresholds: j,
            binarize: b,
        } => {
            if model.is_some() {
                return Err(config_err("--model applies to plugin only; use --stratify"));
            }
            if let Some(s) = stratify {
                *stratification = parse_stratification(s)?;
            }
            *a = alpha.unwrap_or(*a);
            *j = thresholds.or(*j);
            *b = binarize.or(*b);
            gibbs.n_samples = samples.unwrap_or(gibbs.n_samples);
            gibbs.burn_in = burn_in.unwrap_or(gibbs.burn_in);
            gibbs.validate()?;
            if !(*a > 0.0 && *a < 1.0) {
                return Err(config_err(format!("alpha must lie in (0, 1), got {a}")));
            }
        }
    }
    Ok(m)
}

#[derive(Debug, Serialize)]
struct Diagnostics {
    n_rows: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    crossed_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    posterior_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    posterior_samples: Option<u64>,
}

#[derive(Debug, Serialize)]
struct EstimateReport {
    input: String,
    method: Method,
    interval: Interval,
    #[serde(skip_serializing_if = "Option::is_none")]
    histogram: Option<ivbounds::estimators::PosteriorHistogram>,
    diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    labels: Option<Labels>,
}

pub fn run_estimate(ctx: &Ctx, a: EstimateArgs) -> Result<()> {
    let base = ctx.cfg.estimate.method.as_ref();
    let name = match (a.method, base) {
        (Some(m), _) => m,
        (None, Some(Method::Bayes { .. })) => MethodName::Bayes,
        (None, _) => MethodName::Plugin,
    };
    let method = build_method(
        name,
        base,
        a.alpha,
        a.model.as_deref(),
        a.stratify.as_deref(),
        a.thresholds,
        a.binarize,
        a.samples,
        a.burn_in,
    )?;
    let method = method.with_seed(derive_seed(ctx.seed, "estimate", 0, method.name()));
    let ds = IvDataset::load(&a.input)?;
    let out = method.run(&ds).map_err(|e| match e {
        ivbounds::Error::NonBinaryOutcome => {
            anyhow::Error::new(e).context("bayes on a continuous outcome needs --thresholds J or --binarize S")
        }
        e => e.into(),
    })?;
    let report = EstimateReport {
        input: a.input.display().to_string(),
        diagnostics: Diagnostics {
            n_rows: ds.n(),
            crossed_rows: out.crossed_rows,
            posterior_mean: out.histogram.as_ref().map(|h| h.mean()),
            posterior_samples: out.histogram.as_ref().map(|h| h.n_samples()),
        },
        histogram: out.histogram.filter(|_| !a.no_histogram),
        interval: out.interval,
        labels: ds.labels,
        method,
    };
    emit(
        &report,
        || {
            let mut t = Table::new(&["input", "method", "lower", "upper", "n_rows", "sate"]);
            t.push(vec![
                report.input.clone(),
                report.method.name().into(),
                num(report.interval.lower()),
                num(report.interval.upper()),
                ds.n().to_string(),
                opt(ds.labels.map(|l| l.sate)),
            ]);
            Ok(t)
        },
        ctx.format,
        a.report.as_deref(),
    )
}
