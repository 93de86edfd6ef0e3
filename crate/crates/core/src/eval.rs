//! Validity, width and timing metrics, seed aggregation and sweeps.

use std::collections::BTreeMap;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::benchmarks::{gen_calib_dgp, CalibDgpConfig, DgpFamily};
use crate::bounds::{sate_bounds_from_probs, threshold_grid, SateBounds, DEFAULT_THRESHOLDS};
use crate::dataset::IvDataset;
use crate::error::{Error, Result};
use crate::estimators::{
    gibbs_posterior, gibbs_posterior_thresholded, plugin_bounds, quantile_interval, GibbsConfig, ModelKind,
    PosteriorHistogram, Stratification,
};
use crate::interval::Interval;
use crate::rct2iv::fixtures::NswAnalog;
use crate::rct2iv::{convert, Conversion, ConversionConfig, RctTable};
use crate::rng::{derive_seed, indexed_stream};
use crate::sampling::{mean, sample_sd};
use crate::strata::CondProbs;

pub fn validity_true_bounds(est: &Interval, truth: &Interval) -> u8 {
    u8::from(est.lower() <= truth.lower() && est.upper() >= truth.upper())
}

pub fn validity_label(est: &Interval, label: f64) -> u8 {
    u8::from(est.contains(label))
}

pub fn norm_width(est: &Interval, y_min: f64, y_max: f64) -> Result<f64> {
    if !(y_max > y_min) {
        return Err(Error::Data(format!("zero-range outcome [{y_min}, {y_max}]")));
    }
    Ok(est.width() / (y_max - y_min))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Method {
    Plugin {
        model: ModelKind,
        #[serde(default = "default_thresholds")]
        thresholds: usize,
    },
    Bayes {
        #[serde(default)]
        gibbs: GibbsConfig,
        #[serde(default = "pooled")]
        stratification: Stratification,
        #[serde(default = "default_alpha")]
        alpha: f64,
        /// Threshold grid for outcomes in `[0, 1]`.
        #[serde(default)]
        thresholds: Option<usize>,
        /// Fixed binarization `1{y >= s}` instead of a grid.
        #[serde(default)]
        binarize: Option<f64>,
    },
}

fn default_thresholds() -> usize {
    DEFAULT_THRESHOLDS
}
fn pooled() -> Stratification {
    Stratification::Pooled
}
fn default_alpha() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutput {
    pub interval: Interval,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub histogram: Option<PosteriorHistogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crossed_rows: Option<usize>,
}

impl Method {
    pub fn plugin(model: ModelKind) -> Self {
        Method::Plugin {
            model,
            thresholds: DEFAULT_THRESHOLDS,
        }
    }

    pub fn bayes(gibbs: GibbsConfig, stratification: Stratification, alpha: f64) -> Self {
        Method::Bayes {
            gibbs,
            stratification,
            alpha,
            thresholds: None,
            binarize: None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Plugin { .. } => "plugin",
            Method::Bayes { .. } => "bayes",
        }
    }

    /// The same method with its chain seed replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut m = self.clone();
        if let Method::Bayes { gibbs, .. } = &mut m {
            gibbs.seed = seed;
        }
        m
    }

    pub fn posterior(&self, dataset: &IvDataset) -> Result<PosteriorHistogram> {
        let Method::Bayes {
            gibbs,
            stratification,
            thresholds,
            binarize,
            ..
        } = self
        else {
            return Err(Error::Config("the plug-in method has no posterior".into()));
        };
        if let Some(s) = binarize {
            return gibbs_posterior(&dataset.binarized(*s), gibbs, stratification);
        }
        match thresholds {
            _ if dataset.is_binary_outcome() => gibbs_posterior(dataset, gibbs, stratification),
            Some(j) => gibbs_posterior_thresholded(dataset, gibbs, stratification, *j),
            None => Err(Error::NonBinaryOutcome),
        }
    }

    pub fn run(&self, dataset: &IvDataset) -> Result<MethodOutput> {
        match self {
            Method::Plugin { model, thresholds } => {
                let b = plugin_bounds(dataset, model, *thresholds)?;
                Ok(MethodOutput {
                    interval: b.interval,
                    histogram: None,
                    crossed_rows: Some(b.crossed_rows),
                })
            }
            Method::Bayes { alpha, .. } => {
                let h = self.posterior(dataset)?;
                Ok(MethodOutput {
                    interval: quantile_interval(&h, *alpha)?,
                    histogram: Some(h),
                    crossed_rows: None,
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingProtocol {
    pub repetitions: usize,
    pub warmup: bool,
}

impl Default for TimingProtocol {
    fn default() -> Self {
        Self {
            repetitions: 3,
            warmup: true,
        }
    }
}

/// Median wall time of `method` over the protocol's repetitions, scaled to
/// seconds per 1,000 rows. Runs on a single worker.
pub fn timed_run(method: &Method, dataset: &IvDataset, protocol: &TimingProtocol) -> Result<(MethodOutput, f64)> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Contract(format!("timing pool: {e}")))?;
    pool.install(|| {
        if protocol.warmup {
            method.run(dataset)?;
        }
        let mut times = Vec::with_capacity(protocol.repetitions.max(1));
        let mut out = None;
        for _ in 0..protocol.repetitions.max(1) {
            let start = Instant::now();
            let o = method.run(dataset)?;
            times.push(start.elapsed().as_secs_f64());
            out = Some(o);
        }
        Ok((
            out.expect("at least one repetition"),
            per_1k(median(&mut times), dataset.n()),
        ))
    })
}

pub fn per_1k(wall_seconds: f64, n_rows: usize) -> f64 {
    wall_seconds * 1000.0 / n_rows.max(1) as f64
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        0.5 * (xs[m - 1] + xs[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidityKind {
    TrueBounds,
    Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub method: String,
    pub seed: u64,
    pub validity: u8,
    pub validity_kind: ValidityKind,
    pub norm_width: f64,
    pub time_per_1k_s: f64,
    pub interval: Interval,
}

/// Scores an interval on the unit outcome scale against the dataset's labels.
pub fn score(
    method: &str,
    seed: u64,
    interval: Interval,
    dataset: &IvDataset,
    time_per_1k_s: f64,
) -> Result<EvalRecord> {
    let labels = dataset
        .labels
        .ok_or_else(|| Error::Data("dataset carries no labels to evaluate against".into()))?;
    let (validity, validity_kind) = match (labels.lower, labels.upper) {
        (Some(lo), Some(hi)) => (
            validity_true_bounds(&interval, &Interval::new(lo, hi)?),
            ValidityKind::TrueBounds,
        ),
        _ => (validity_label(&interval, labels.sate), ValidityKind::Label),
    };
    Ok(EvalRecord {
        method: method.to_string(),
        seed,
        validity,
        validity_kind,
        norm_width: norm_width(&interval, 0.0, 1.0)?,
        time_per_1k_s,
        interval,
    })
}

pub fn evaluate(method: &Method, dataset: &IvDataset, seed: u64, protocol: &TimingProtocol) -> Result<EvalRecord> {
    let m = method.with_seed(derive_seed(seed, "eval", 0, method.name()));
    let (out, t) = timed_run(&m, dataset, protocol)?;
    score(method.name(), seed, out.interval, dataset, t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Absent for a single value.
    pub ste: Option<f64>,
}

impl Stat {
    pub fn of(xs: &[f64]) -> Self {
        Self {
            mean: mean(xs),
            ste: (xs.len() >= 2).then(|| sample_sd(xs) / (xs.len() as f64).sqrt()),
        }
    }

    pub fn ste_or_zero(&self) -> f64 {
        self.ste.unwrap_or(0.0)
    }
}

impl std::fmt::Display for Stat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.ste {
            Some(s) => write!(f, "{:.3} ± {:.3}", self.mean, s),
            None => write!(f, "{:.3}", self.mean),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub n_seeds: usize,
    pub validity: Stat,
    pub norm_width: Stat,
    pub time_per_1k_s: Stat,
}

/// Per-method mean and standard error, sorted by method name.
pub fn aggregate(records: &[EvalRecord]) -> Vec<AggregateRow> {
    let mut by: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        by.entry(&r.method).or_default().push(r);
    }
    by.into_iter()
        .map(|(m, rs)| {
            let col = |f: fn(&EvalRecord) -> f64| -> Stat {
                let mut xs: Vec<(u64, f64)> = rs.iter().map(|r| (r.seed, f(r))).collect();
                // Fixed summation order regardless of input order.
                xs.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
                Stat::of(&xs.into_iter().map(|x| x.1).collect::<Vec<_>>())
            };
            AggregateRow {
                method: m.to_string(),
                n_seeds: rs.len(),
                validity: col(|r| r.validity as f64),
                norm_width: col(|r| r.norm_width),
                time_per_1k_s: col(|r| r.time_per_1k_s),
            }
        })
        .collect()
}

pub fn write_aggregate_csv<W: Write>(rows: &[AggregateRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "method",
        "n_seeds",
        "validity_mean",
        "validity_ste",
        "norm_width_mean",
        "norm_width_ste",
        "time_per_1k_s_mean",
        "time_per_1k_s_ste",
    ])?;
    let opt = |s: Option<f64>| s.map(|v| format!("{v:?}")).unwrap_or_default();
    for r in rows {
        out.write_record([
            r.method.clone(),
            r.n_seeds.to_string(),
            format!("{:?}", r.validity.mean),
            opt(r.validity.ste),
            format!("{:?}", r.norm_width.mean),
            opt(r.norm_width.ste),
            format!("{:?}", r.time_per_1k_s.mean),
            opt(r.time_per_1k_s.ste),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Evaluation report layout shared by the CLI emitters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub benchmark: String,
    pub methods: Vec<String>,
    pub aggregate: Vec<AggregateRow>,
    pub records: Vec<EvalRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<serde_json::Value>,
}

/// Nominal credibility levels `1 − α`.
pub const CALIBRATION_LEVELS: [f64; 18] = [
    0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.85, 0.9, 0.925, 0.95, 0.975, 0.99, 0.995,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationPoint {
    pub level: f64,
    pub coverage: Stat,
}

/// Coverage of each level's quantile interval over `(posterior, label)` pairs.
pub fn calibration_curve(posteriors: &[(PosteriorHistogram, f64)], levels: &[f64]) -> Result<Vec<CalibrationPoint>> {
    levels
        .iter()
        .map(|&level| {
            let hits = posteriors
                .iter()
                .map(|(h, label)| Ok(f64::from(validity_label(&quantile_interval(h, 1.0 - level)?, *label))))
                .collect::<Result<Vec<f64>>>()?;
            Ok(CalibrationPoint {
                level,
                coverage: Stat::of(&hits),
            })
        })
        .collect()
}

/// A posterior estimator as used by the sweeps; gets the dataset and a chain seed.
pub type PosteriorFn<'a> = dyn Fn(&IvDataset, u64) -> Result<PosteriorHistogram> + Sync + 'a;

/// Draws `k` calibration datasets of `family` and pairs each posterior with its label.
pub fn calibration_posteriors(
    family: DgpFamily,
    n: usize,
    d: usize,
    k: usize,
    seed: u64,
    estimator: &PosteriorFn<'_>,
) -> Result<Vec<(PosteriorHistogram, f64)>> {
    (0..k as u64)
        .into_par_iter()
        .map(|i| {
            let ds = gen_calib_dgp(&CalibDgpConfig::new(
                family,
                n,
                d,
                derive_seed(seed, "calibration", i, "dataset"),
            ))?;
            let label = ds
                .labels
                .map(|l| l.sate)
                .ok_or_else(|| Error::Data("unlabeled dataset".into()))?;
            Ok((estimator(&ds, derive_seed(seed, "calibration", i, "chain"))?, label))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCell {
    pub n: usize,
    pub d: usize,
    pub coverage: Stat,
    pub norm_width: Stat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub family: DgpFamily,
    pub alpha: f64,
    pub seeds_per_cell: usize,
    pub n_sweep: Vec<SensitivityCell>,
    pub d_sweep: Vec<SensitivityCell>,
}

pub const SENSITIVITY_N_GRID: [usize; 5] = [256, 512, 1024, 2048, 4096];
pub const SENSITIVITY_D_GRID: [usize; 5] = [2, 4, 8, 16, 32];

#[allow(clippy::too_many_arguments)]
fn sensitivity_cell(
    family: DgpFamily,
    n: usize,
    d: usize,
    k: usize,
    alpha: f64,
    seed: u64,
    cell: u64,
    estimator: &PosteriorFn<'_>,
) -> Result<SensitivityCell> {
    let scored: Vec<(f64, f64)> = (0..k as u64)
        .into_par_iter()
        .map(|i| {
            let idx = cell * k as u64 + i;
            let ds = gen_calib_dgp(&CalibDgpConfig::new(
                family,
                n,
                d,
                derive_seed(seed, "sensitivity", idx, "dataset"),
            ))?;
            let label = ds
                .labels
                .map(|l| l.sate)
                .ok_or_else(|| Error::Data("unlabeled dataset".into()))?;
            let est = quantile_interval(&estimator(&ds, derive_seed(seed, "sensitivity", idx, "chain"))?, alpha)?;
            Ok((f64::from(validity_label(&est, label)), norm_width(&est, 0.0, 1.0)?))
        })
        .collect::<Result<_>>()?;
    let (cov, width): (Vec<f64>, Vec<f64>) = scored.into_iter().unzip();
    Ok(SensitivityCell {
        n,
        d,
        coverage: Stat::of(&cov),
        norm_width: Stat::of(&width),
    })
}

/// Sample-size sweep at `d_fixed` and dimension sweep at `n_fixed`.
#[allow(clippy::too_many_arguments)]
pub fn sensitivity_sweep(
    family: DgpFamily,
    n_grid: &[usize],
    d_grid: &[usize],
    (n_fixed, d_fixed): (usize, usize),
    k: usize,
    alpha: f64,
    seed: u64,
    estimator: &PosteriorFn<'_>,
) -> Result<SensitivityReport> {
    if n_grid.is_empty() || d_grid.is_empty() || k == 0 {
        return Err(Error::Config(
            "sensitivity grids and seed count must be nonempty".into(),
        ));
    }
    let mut cell = 0u64;
    let mut next = || {
        cell += 1;
        cell - 1
    };
    let n_sweep = n_grid
        .iter()
        .map(|&n| sensitivity_cell(family, n, d_fixed, k, alpha, seed, next(), estimator))
        .collect::<Result<_>>()?;
    let d_sweep = d_grid
        .iter()
        .map(|&d| sensitivity_cell(family, n_fixed, d, k, alpha, seed, next(), estimator))
        .collect::<Result<_>>()?;
    Ok(SensitivityReport {
        family,
        alpha,
        seeds_per_cell: k,
        n_sweep,
        d_sweep,
    })
}

/// Stratifies on the signs of the first `⌊log2 d⌋` covariates, giving `d` cells
/// for powers of two.
pub fn d_proxy_stratification(d: usize) -> Stratification {
    let k = (usize::BITS - 1 - d.max(1).leading_zeros()) as usize;
    if k == 0 {
        Stratification::Pooled
    } else {
        Stratification::Signs { k: k.min(d) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    NonIncreasing,
    NonDecreasing,
}

/// Checks a trend over cell means, allowing the larger of the two standard
/// errors as slack on every adjacent pair.
pub fn trend_holds(stats: &[Stat], trend: Trend) -> bool {
    stats.windows(2).all(|w| {
        let slack = w[0].ste_or_zero().max(w[1].ste_or_zero());
        match trend {
            Trend::NonIncreasing => w[1].mean <= w[0].mean + slack,
            Trend::NonDecreasing => w[1].mean >= w[0].mean - slack,
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrengthPoint {
    pub beta: f64,
    pub rho_zt: f64,
    pub interval: Interval,
    pub width: f64,
}

/// Converts `table` once per `β` and estimates on each converted dataset.
pub fn strength_sweep(
    table: &RctTable,
    config: impl Fn(f64) -> ConversionConfig,
    betas: &[f64],
    estimator: impl Fn(&Conversion) -> Result<Interval>,
) -> Result<Vec<StrengthPoint>> {
    if betas.is_empty() {
        return Err(Error::Config("beta grid is empty".into()));
    }
    betas
        .iter()
        .map(|&beta| {
            let conv = convert(table, &config(beta))?;
            let interval = estimator(&conv)?;
            Ok(StrengthPoint {
                beta,
                rho_zt: conv.report.rho_zt,
                interval,
                width: interval.width(),
            })
        })
        .collect()
}

/// True bounds of a converted NSW-analog table.
///
/// Acceptance has probability one half whatever the unit, so
/// `p_{yt.z}(o) = E[p_t(o, h, z) · 1{Y(t) = y} | o]` over the analog's latent
/// law. The expectation uses `draws` latent draws per row, shared across `z`,
/// which makes each row's `p` exactly IV-consistent. Outcomes are mapped to the
/// dataset's unit scale and discretized on `thresholds` cut points.
pub fn jobs_analog_true_bounds(
    conv: &Conversion,
    analog: &NswAnalog,
    draws: usize,
    thresholds: usize,
    seed: u64,
) -> Result<SateBounds> {
    let ds = &conv.dataset;
    let grid: Vec<f64> = threshold_grid(thresholds)
        .iter()
        .map(|&s| ds.y_scale.to_raw(s))
        .collect();
    let per_row: Vec<Vec<CondProbs>> = ds
        .rows
        .par_iter()
        .enumerate()
        .map(|(i, row)| {
            let o: [f64; 6] = row
                .x
                .as_slice()
                .try_into()
                .map_err(|_| Error::Data("expected the six NSW observed columns".into()))?;
            let mut rng = indexed_stream(seed, "eval/jobs-latent", i as u64);
            let mut acc = vec![[0.0f64; 8]; grid.len()];
            let mut full = o.to_vec();
            full.extend([0.0, 0.0]);
            for _ in 0..draws {
                let (l74, l75, y0, y1) = analog.draw_latent(&o, &mut rng);
                full[6] = l74;
                full[7] = l75;
                for z in 0..2u8 {
                    let p1 = conv.fitted.p_t(&full, z);
                    for (j, &cut) in grid.iter().enumerate() {
                        for (t, y, w) in [(0u8, y0, 1.0 - p1), (1u8, y1, p1)] {
                            acc[j][CondProbs::slot(u8::from(y >= cut), t, z)] += w;
                        }
                    }
                }
            }
            acc.into_iter()
                .map(|a| CondProbs::renormalized(a.map(|v| v / draws as f64)))
                .collect()
        })
        .collect::<Result<_>>()?;
    let j = grid.len();
    let (mut lo, mut hi, mut crossed) = (0.0, 0.0, 0);
    for k in 0..j {
        let b = sate_bounds_from_probs(per_row.iter().map(|r| &r[k]))?;
        lo += b.interval.lower();
        hi += b.interval.upper();
        crossed += b.crossed_rows;
    }
    Ok(SateBounds {
        interval: Interval::new(lo / j as f64, hi / j as f64)?,
        crossed_rows: crossed,
        n_rows: ds.n(),
    })
}

/// Pearson correlation of two binary sequences.
pub fn rho_binary(a: &[u8], b: &[u8]) -> f64 {
    let af: Vec<f64> = a.iter().map(|&v| v as f64).collect();
    let bf: Vec<f64> = b.iter().map(|&v| v as f64).collect();
    crate::sampling::pearson(&af, &bf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> Interval {
        Interval::new(a, b).unwrap()
    }

    #[test]
    fn validity_examples() {
        assert_eq!(validity_true_bounds(&iv(-0.2, 0.4), &iv(-0.1, 0.3)), 1);
        assert_eq!(validity_true_bounds(&iv(-0.1, 0.3), &iv(-0.1, 0.3)), 1);
        assert_eq!(validity_true_bounds(&iv(-0.05, 0.4), &iv(-0.1, 0.3)), 0);
        assert_eq!(validity_label(&iv(-0.2, 0.4), 0.0), 1);
        assert_eq!(validity_label(&iv(-0.2, 0.4), 0.5), 0);
        assert_eq!(validity_label(&iv(0.3, 0.3), 0.3), 1);
    }

    #[test]
    fn width_examples() {
        assert_eq!(norm_width(&iv(-0.5, 0.5), 0.0, 1.0).unwrap(), 1.0);
        assert!((norm_width(&iv(0.1, 0.2), 0.0, 1.0).unwrap() - 0.1).abs() < 1e-15);
        assert_eq!(norm_width(&iv(0.2, 0.2), 0.0, 1.0).unwrap(), 0.0);
        assert!(norm_width(&iv(0.0, 1.0), 1.0, 1.0).is_err());
    }

    #[test]
    fn timing_scale() {
        assert_eq!(per_1k(2.0, 4000), 0.5);
        assert_eq!(per_1k(1.7, 1000), 1.7);
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
    }

    fn rec(method: &str, seed: u64, validity: u8, w: f64) -> EvalRecord {
        EvalRecord {
            method: method.into(),
            seed,
            validity,
            validity_kind: ValidityKind::Label,
            norm_width: w,
            time_per_1k_s: 0.0,
            interval: iv(0.0, w),
        }
    }

    #[test]
    fn aggregate_examples() {
        let rs: Vec<EvalRecord> = (0..4)
            .map(|s| rec("b", s, 1, 0.1))
            .chain([rec("a", 0, 1, 0.4), rec("a", 1, 0, 0.6)])
            .collect();
        let rows = aggregate(&rs);
        assert_eq!(rows[0].method, "a");
        assert!((rows[0].norm_width.mean - 0.5).abs() < 1e-12);
        assert!((rows[0].norm_width.ste.unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(rows[1].validity.mean, 1.0);
        assert_eq!(rows[1].validity.ste, Some(0.0));
        let single = aggregate(&[rec("c", 0, 1, 0.2)]);
        assert_eq!(single[0].norm_width.ste, None);
        let mut csv = Vec::new();
        write_aggregate_csv(&rows, &mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("method,n_seeds"));
    }

    #[test]
    fn full_range_histogram_always_covers() {
        let h = PosteriorHistogram::from_samples(&[-1.0, 1.0], 1024);
        let cal = calibration_curve(&[(h.clone(), 0.7), (h, -0.99)], &CALIBRATION_LEVELS).unwrap();
        assert!(cal.iter().all(|c| c.coverage.mean == 1.0));
    }

    #[test]
    fn trends_with_slack() {
        let s = |m: f64, e: f64| Stat { mean: m, ste: Some(e) };
        assert!(trend_holds(
            &[s(0.5, 0.01), s(0.4, 0.01), s(0.405, 0.01)],
            Trend::NonIncreasing
        ));
        assert!(!trend_holds(&[s(0.5, 0.01), s(0.55, 0.01)], Trend::NonIncreasing));
        assert!(trend_holds(&[s(0.3, 0.0), s(0.4, 0.0)], Trend::NonDecreasing));
    }

    #[test]
    fn d_proxy_cells() {
        assert_eq!(d_proxy_stratification(1), Stratification::Pooled);
        assert_eq!(d_proxy_stratification(2), Stratification::Signs { k: 1 });
        assert_eq!(d_proxy_stratification(32), Stratification::Signs { k: 5 });
    }

    #[test]
    fn rho_examples() {
        let z: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        assert!((rho_binary(&z, &z) - 1.0).abs() < 1e-12);
    }
}
