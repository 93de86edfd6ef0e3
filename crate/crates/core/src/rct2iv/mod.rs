//! Converting a randomized trial into a confounded IV benchmark.
//!
//! Each unit of a balanced RCT gets a synthetic instrument `Z ~ p_z(O)` and a
//! synthetic treatment `T' ~ p_t(O, U, Z)`; the unit is retained iff `T'`
//! equals its randomized arm. The retained sample is IV data whose average
//! effect equals the RCT's, and the hidden columns `U` are dropped from it.

pub mod fixtures;
pub mod presets;
pub mod spec;

use std::collections::HashMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{IvDataset, Labels, Row};
use crate::error::{Error, Result};
use crate::rng::stream;
use crate::sampling::{pearson, sigmoid};

pub use spec::{ColumnSpace, PropensitySpec, ResolvedSpec, Term};

#[derive(Debug, Clone, PartialEq)]
pub struct RctTable {
    pub columns: Vec<String>,
    /// Row-major covariates, one entry per column.
    pub x: Vec<Vec<f64>>,
    pub t: Vec<u8>,
    pub y: Vec<f64>,
}

impl RctTable {
    pub fn new(columns: Vec<String>, x: Vec<Vec<f64>>, t: Vec<u8>, y: Vec<f64>) -> Result<Self> {
        if x.len() != t.len() || x.len() != y.len() {
            return Err(Error::Data("covariate, treatment and outcome lengths differ".into()));
        }
        if let Some(i) = x.iter().position(|r| r.len() != columns.len()) {
            return Err(Error::Data(format!("row {i} has the wrong number of covariates")));
        }
        if t.iter().any(|&v| v > 1) {
            return Err(Error::Data("RCT treatment must be 0 or 1".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("RCT outcomes must be finite".into()));
        }
        Ok(Self { columns, x, t, y })
    }

    pub fn n(&self) -> usize {
        self.t.len()
    }

    pub fn arm_counts(&self) -> (usize, usize) {
        let treated = self.t.iter().filter(|&&t| t == 1).count();
        (self.n() - treated, treated)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    pub fn require_columns(&self, names: &[&str]) -> Result<Vec<usize>> {
        let missing: Vec<String> = names
            .iter()
            .filter(|n| self.column_index(n).is_none())
            .map(|n| n.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingColumns(missing));
        }
        Ok(names.iter().map(|n| self.column_index(n).unwrap()).collect())
    }

    pub fn select(&self, rows: &[usize]) -> RctTable {
        RctTable {
            columns: self.columns.clone(),
            x: rows.iter().map(|&i| self.x[i].clone()).collect(),
            t: rows.iter().map(|&i| self.t[i]).collect(),
            y: rows.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Difference in mean outcomes between arms.
    pub fn difference_in_means(&self) -> Result<f64> {
        let (mut s, mut c) = ([0.0; 2], [0usize; 2]);
        for (&t, &y) in self.t.iter().zip(&self.y) {
            s[t as usize] += y;
            c[t as usize] += 1;
        }
        if c[0] == 0 || c[1] == 0 {
            return Err(Error::SingleArm);
        }
        Ok(s[1] / c[1] as f64 - s[0] / c[0] as f64)
    }

    /// Reads a CSV with a header. All listed covariate columns must parse as numbers.
    pub fn read_csv(path: &Path, covariates: &[&str], treatment: &str, outcome: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let headers = rdr.headers()?.clone();
        let find = |n: &str| headers.iter().position(|h| h.trim() == n);
        let mut wanted: Vec<&str> = covariates.to_vec();
        wanted.push(treatment);
        wanted.push(outcome);
        let missing: Vec<String> = wanted
            .iter()
            .filter(|n| find(n).is_none())
            .map(|n| n.to_string())
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingColumns(missing));
        }
        let cov_ix: Vec<usize> = covariates.iter().map(|n| find(n).unwrap()).collect();
        let (t_ix, y_ix) = (find(treatment).unwrap(), find(outcome).unwrap());
        let (mut x, mut t, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let num = |j: usize, name: &str| -> Result<f64> {
                rec[j].trim().parse::<f64>().map_err(|_| {
                    Error::Data(format!(
                        "row {}: column '{name}' is not numeric: '{}'",
                        line + 1,
                        &rec[j]
                    ))
                })
            };
            x.push(
                cov_ix
                    .iter()
                    .zip(covariates)
                    .map(|(&j, n)| num(j, n))
                    .collect::<Result<Vec<_>>>()?,
            );
            let tv = num(t_ix, treatment)?;
            if tv != 0.0 && tv != 1.0 {
                return Err(Error::Data(format!("row {}: treatment must be 0 or 1", line + 1)));
            }
            t.push(tv as u8);
            y.push(num(y_ix, outcome)?);
        }
        Self::new(covariates.iter().map(|s| s.to_string()).collect(), x, t, y)
    }
}

/// Uniformly subsamples the larger arm down to the size of the smaller one.
/// Returns the balanced table and the retained row indices (ascending).
pub fn balance_arms(table: &RctTable, seed: u64) -> Result<(RctTable, Vec<usize>)> {
    let (n0, n1) = table.arm_counts();
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleArm);
    }
    let arm = |a: u8| -> Vec<usize> { (0..table.n()).filter(|&i| table.t[i] == a).collect() };
    let (small, large) = if n0 <= n1 { (arm(0), arm(1)) } else { (arm(1), arm(0)) };
    let mut rng = stream(seed, "rct2iv/balance");
    let mut keep: Vec<usize> = sample(&mut rng, large.len(), small.len())
        .into_iter()
        .map(|k| large[k])
        .collect();
    keep.extend(small);
    keep.sort_unstable();
    Ok((table.select(&keep), keep))
}

fn default_pz_clip() -> (f64, f64) {
    (0.05, 0.95)
}

fn default_pt_clip() -> (f64, f64) {
    (0.01, 0.99)
}

fn half() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConversionConfig {
    pub observed_cols: Vec<String>,
    pub hidden_cols: Vec<String>,
    pub pz: PropensitySpec,
    #[serde(default = "default_pz_clip")]
    pub pz_clip: (f64, f64),
    pub pt: PropensitySpec,
    #[serde(default = "default_pt_clip")]
    pub pt_clip: (f64, f64),
    pub beta: f64,
    #[serde(default = "half")]
    pub target_z: f64,
    #[serde(default = "half")]
    pub target_t: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ConversionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("pz_clip", self.pz_clip), ("pt_clip", self.pt_clip)] {
            if !(0.0 < lo && lo < hi && hi < 1.0) {
                return Err(Error::Config(format!(
                    "{name} ({lo}, {hi}) must lie strictly inside (0, 1)"
                )));
            }
        }
        if !self.beta.is_finite() {
            return Err(Error::Config("beta must be finite".into()));
        }
        if let Some(c) = self.observed_cols.iter().find(|c| self.hidden_cols.contains(c)) {
            return Err(Error::Config(format!("column '{c}' is both observed and hidden")));
        }
        Ok(())
    }
}

/// The calibrated propensity models of one conversion. Both take raw column values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPropensities {
    /// Over observed columns only.
    pub pz: ResolvedSpec,
    pub b_z: f64,
    pub pz_clip: (f64, f64),
    /// Over observed then hidden columns.
    pub pt: ResolvedSpec,
    pub b_t: f64,
    pub beta: f64,
    pub pt_clip: (f64, f64),
}

impl FittedPropensities {
    pub fn p_z(&self, observed: &[f64]) -> f64 {
        let (lo, hi) = self.pz_clip;
        sigmoid(self.pz.score(observed) + self.b_z).clamp(lo, hi)
    }

    /// `observed_and_hidden` is the observed values followed by the hidden ones.
    pub fn p_t(&self, observed_and_hidden: &[f64], z: u8) -> f64 {
        let (lo, hi) = self.pt_clip;
        sigmoid(self.pt.score(observed_and_hidden) + self.beta * z as f64 + self.b_t).clamp(lo, hi)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub mean_p_t: f64,
    pub empirical_rate: f64,
    pub n: usize,
    pub se: f64,
    pub gap: f64,
    pub within_3se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionReport {
    pub n_input: usize,
    pub n_accepted: usize,
    pub acceptance_rate: f64,
    pub rho_zt: f64,
    /// RCT difference in means on the raw outcome scale.
    pub pate_label: f64,
    /// The same label on the dataset's unit outcome scale.
    pub pate_label_unit: f64,
    /// Largest absolute per-decile gap between mean `p_t` and the accepted treatment rate.
    pub preservation_gap: f64,
    pub preservation: Vec<BucketRow>,
    /// Acceptance rate per `p_t` quintile over all input rows.
    pub acceptance_by_pt_quintile: Vec<BucketRow>,
    /// `|P̂(T_rct = 1) − 0.5|` of the input, nonzero only for odd totals or unbalanced input.
    pub arm_balance_gap: f64,
    pub mean_z: f64,
    pub b_z: f64,
    pub b_t: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conversion {
    pub dataset: IvDataset,
    pub report: ConversionReport,
    pub fitted: FittedPropensities,
    /// Input row indices of the accepted units.
    pub accepted: Vec<usize>,
    /// `p_t` of every input row at its drawn instrument.
    pub p_t: Vec<f64>,
    pub z: Vec<u8>,
}

/// Smallest `b` in `[lo, hi]` with `f(b) >= target` for nondecreasing `f`.
fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    if f(lo) >= target {
        return lo;
    }
    if f(hi) < target {
        return hi;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo < 1e-12 {
            break;
        }
    }
    hi
}

/// Buckets units by `p` into `k` equal-count groups and compares the mean of
/// `p` with the empirical rate of `outcome`.
pub fn bucket_check(p: &[f64], outcome: &[bool], k: usize) -> Vec<BucketRow> {
    let mut order: Vec<usize> = (0..p.len()).collect();
    order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
    let n = order.len();
    (0..k)
        .filter_map(|b| {
            let idx = &order[b * n / k..(b + 1) * n / k];
            if idx.is_empty() {
                return None;
            }
            let m = idx.len() as f64;
            let mean_p = idx.iter().map(|&i| p[i]).sum::<f64>() / m;
            let rate = idx.iter().filter(|&&i| outcome[i]).count() as f64 / m;
            // Variance of a sum of independent Bernoulli(p_i), per unit.
            let se = (idx.iter().map(|&i| p[i] * (1.0 - p[i])).sum::<f64>()).sqrt() / m;
            let gap = (rate - mean_p).abs();
            Some(BucketRow {
                mean_p_t: mean_p,
                empirical_rate: rate,
                n: idx.len(),
                se,
                gap,
                within_3se: gap <= 3.0 * se + 1e-12,
            })
        })
        .collect()
}

/// Deciles of `p_t` among accepted units against their treatment rate.
pub fn propensity_preservation_check(p_t: &[f64], t: &[u8]) -> Vec<BucketRow> {
    let treated: Vec<bool> = t.iter().map(|&v| v == 1).collect();
    bucket_check(p_t, &treated, 10)
}

pub fn convert(table: &RctTable, cfg: &ConversionConfig) -> Result<Conversion> {
    cfg.validate()?;
    let obs_names: Vec<&str> = cfg.observed_cols.iter().map(String::as_str).collect();
    let hid_names: Vec<&str> = cfg.hidden_cols.iter().map(String::as_str).collect();
    let obs_ix = table.require_columns(&obs_names)?;
    let hid_ix = table.require_columns(&hid_names)?;
    let (n0, n1) = table.arm_counts();
    if n0 == 0 || n1 == 0 {
        return Err(Error::SingleArm);
    }
    let n = table.n();

    let observed: Vec<Vec<f64>> = table.x.iter().map(|r| obs_ix.iter().map(|&j| r[j]).collect()).collect();
    let full: Vec<Vec<f64>> = table
        .x
        .iter()
        .map(|r| obs_ix.iter().chain(&hid_ix).map(|&j| r[j]).collect())
        .collect();

    // p_z only ever sees the observed column space.
    let obs_space = ColumnSpace::fit(cfg.observed_cols.clone(), &observed);
    let pz = ResolvedSpec::resolve(&cfg.pz, &obs_space).map_err(|e| match e {
        Error::MissingColumns(cols) => Error::Contract(format!(
            "instrument propensity may only use observed columns; offending: {}",
            cols.join(", ")
        )),
        other => other,
    })?;
    let mut full_names = cfg.observed_cols.clone();
    full_names.extend(cfg.hidden_cols.iter().cloned());
    let full_space = ColumnSpace::fit(full_names, &full);
    let pt = ResolvedSpec::resolve(&cfg.pt, &full_space)?;

    let mut zr = stream(cfg.seed, "rct2iv/z");
    let uz: Vec<f64> = (0..n).map(|_| zr.random::<f64>()).collect();
    let mut tr = stream(cfg.seed, "rct2iv/t");
    let ut: Vec<f64> = (0..n).map(|_| tr.random::<f64>()).collect();

    let sz: Vec<f64> = observed.iter().map(|o| pz.score(o)).collect();
    let (zlo, zhi) = cfg.pz_clip;
    let pz_at = |b: f64, i: usize| sigmoid(sz[i] + b).clamp(zlo, zhi);
    let b_z = match cfg.pz.intercept {
        Some(b) => b,
        None => bisect(
            |b| (0..n).filter(|&i| uz[i] < pz_at(b, i)).count() as f64 / n as f64,
            cfg.target_z,
            -40.0,
            40.0,
        ),
    };
    let z: Vec<u8> = (0..n).map(|i| u8::from(uz[i] < pz_at(b_z, i))).collect();

    let st: Vec<f64> = full.iter().map(|r| pt.score(r)).collect();
    let (tlo, thi) = cfg.pt_clip;
    let pt_at = |b: f64, i: usize| sigmoid(st[i] + cfg.beta * z[i] as f64 + b).clamp(tlo, thi);
    let b_t = match cfg.pt.intercept {
        Some(b) => b,
        None => bisect(
            |b| (0..n).map(|i| pt_at(b, i)).sum::<f64>() / n as f64,
            cfg.target_t,
            -40.0,
            40.0,
        ),
    };
    let p_t: Vec<f64> = (0..n).map(|i| pt_at(b_t, i)).collect();
    let t_synth: Vec<u8> = (0..n).map(|i| u8::from(ut[i] < p_t[i])).collect();
    let accepted: Vec<usize> = (0..n).filter(|&i| t_synth[i] == table.t[i]).collect();
    if accepted.is_empty() {
        return Err(Error::Data("no units accepted".into()));
    }

    let rows: Vec<Row> = accepted
        .iter()
        .map(|&i| Row {
            x: observed[i].clone(),
            z: z[i],
            t: table.t[i],
            y: table.y[i],
        })
        .collect();
    let pate_label = table.difference_in_means()?;
    let dataset = IvDataset::from_raw_outcomes(cfg.observed_cols.len(), rows, cfg.seed, "rct2iv")?;
    let pate_label_unit = if dataset.y_scale.range() > 0.0 {
        pate_label / dataset.y_scale.range()
    } else {
        0.0
    };
    let dataset = dataset.with_labels(Labels {
        sate: pate_label_unit,
        lower: None,
        upper: None,
    })?;

    let acc_z: Vec<f64> = accepted.iter().map(|&i| z[i] as f64).collect();
    let acc_t: Vec<f64> = accepted.iter().map(|&i| table.t[i] as f64).collect();
    let acc_pt: Vec<f64> = accepted.iter().map(|&i| p_t[i]).collect();
    let acc_tu8: Vec<u8> = accepted.iter().map(|&i| table.t[i]).collect();
    let preservation = propensity_preservation_check(&acc_pt, &acc_tu8);
    let is_accepted: Vec<bool> = (0..n).map(|i| t_synth[i] == table.t[i]).collect();
    // Under balance acceptance is 0.5 whatever p_t is; check against that constant.
    let mut acceptance_by_pt_quintile = Vec::new();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p_t[a].total_cmp(&p_t[b]).then(a.cmp(&b)));
    for q in 0..5 {
        let idx = &order[q * n / 5..(q + 1) * n / 5];
        if idx.is_empty() {
            continue;
        }
        let m = idx.len() as f64;
        let rate = idx.iter().filter(|&&i| is_accepted[i]).count() as f64 / m;
        let se = (0.25 / m).sqrt();
        let gap = (rate - 0.5).abs();
        acceptance_by_pt_quintile.push(BucketRow {
            mean_p_t: idx.iter().map(|&i| p_t[i]).sum::<f64>() / m,
            empirical_rate: rate,
            n: idx.len(),
            se,
            gap,
            within_3se: gap <= 3.0 * se,
        });
    }

    let report = ConversionReport {
        n_input: n,
        n_accepted: accepted.len(),
        acceptance_rate: accepted.len() as f64 / n as f64,
        rho_zt: pearson(&acc_z, &acc_t),
        pate_label,
        pate_label_unit,
        preservation_gap: preservation.iter().map(|b| b.gap).fold(0.0, f64::max),
        preservation,
        acceptance_by_pt_quintile,
        arm_balance_gap: (n1 as f64 / n as f64 - 0.5).abs(),
        mean_z: z.iter().map(|&v| v as f64).sum::<f64>() / n as f64,
        b_z,
        b_t,
        beta: cfg.beta,
    };
    Ok(Conversion {
        dataset,
        report,
        fitted: FittedPropensities {
            pz,
            b_z,
            pz_clip: cfg.pz_clip,
            pt,
            b_t,
            beta: cfg.beta,
            pt_clip: cfg.pt_clip,
        },
        accepted,
        p_t,
        z,
    })
}

/// Maps category strings to fixed integer codes, case-insensitively.
pub(crate) fn encode(map: &HashMap<&'static str, f64>, raw: &str) -> Option<f64> {
    let key = raw.trim().to_ascii_lowercase();
    map.get(key.as_str()).copied().or_else(|| key.parse::<f64>().ok())
}
