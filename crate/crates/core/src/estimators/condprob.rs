//! Native models of `p_{yt.z}(x)`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bounds::CondProbSource;
use crate::dataset::{IvDataset, Row};
use crate::error::{Error, Result};
use crate::sampling::softmax_in_place;
use crate::strata::CondProbs;

pub const SMOOTHING: f64 = 0.5;
pub const RIDGE: f64 = 1e-3;

const NEWTON_MAX_ITER: usize = 100;
const NEWTON_TOL: f64 = 1e-10;

/// Maps covariates to a discrete cell key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Stratification {
    /// A single cell.
    Pooled,
    /// One cell per distinct value tuple of the given (discrete) columns.
    Discrete { cols: Vec<usize> },
    /// Bins one column at the given increasing edges.
    Binned { col: usize, edges: Vec<f64> },
    /// Sign pattern of the first `k` columns.
    Signs { k: usize },
}

pub type CellKey = Vec<i64>;

impl Stratification {
    pub fn validate(&self, d: usize) -> Result<()> {
        let bad = |c: usize| Error::Config(format!("stratification column {c} out of range for d = {d}"));
        match self {
            Stratification::Pooled => Ok(()),
            Stratification::Discrete { cols } => match cols.iter().find(|&&c| c >= d) {
                Some(&c) => Err(bad(c)),
                None => Ok(()),
            },
            Stratification::Binned { col, edges } => {
                if *col >= d {
                    return Err(bad(*col));
                }
                if edges.windows(2).any(|w| !(w[0] < w[1])) {
                    return Err(Error::Config("bin edges must be strictly increasing".into()));
                }
                Ok(())
            }
            Stratification::Signs { k } if *k > d => Err(bad(*k - 1)),
            Stratification::Signs { .. } => Ok(()),
        }
    }

    pub fn key(&self, x: &[f64]) -> CellKey {
        match self {
            Stratification::Pooled => Vec::new(),
            Stratification::Discrete { cols } => cols.iter().map(|&c| x[c].round() as i64).collect(),
            Stratification::Binned { col, edges } => vec![edges.partition_point(|e| *e <= x[*col]) as i64],
            Stratification::Signs { k } => x[..*k].iter().map(|v| i64::from(*v >= 0.0)).collect(),
        }
    }

    /// Groups row indices by cell, in key order.
    pub fn partition(&self, rows: &[Row]) -> BTreeMap<CellKey, Vec<usize>> {
        let mut cells: BTreeMap<CellKey, Vec<usize>> = BTreeMap::new();
        for (i, r) in rows.iter().enumerate() {
            cells.entry(self.key(&r.x)).or_default().push(i);
        }
        cells
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelKind {
    Pooled,
    Stratified { stratification: Stratification },
    MultinomialLogistic,
}

/// Per-slot counts `n_{yt.z}`.
pub fn cell_counts<'a>(rows: impl IntoIterator<Item = &'a Row>) -> Result<[u64; 8]> {
    let mut n = [0u64; 8];
    for r in rows {
        let y = match r.y {
            0.0 => 0,
            1.0 => 1,
            _ => return Err(Error::NonBinaryOutcome),
        };
        n[CondProbs::slot(y, r.t, r.z)] += 1;
    }
    Ok(n)
}

fn smoothed(n: &[u64; 8]) -> Result<CondProbs> {
    let mut p = [0.0; 8];
    for z in 0..2 {
        let total: u64 = n[4 * z..4 * z + 4].iter().sum();
        for k in 4 * z..4 * z + 4 {
            p[k] = (n[k] as f64 + SMOOTHING) / (total as f64 + 4.0 * SMOOTHING);
        }
    }
    CondProbs::new(p)
}

fn require_arms(n: &[u64; 8]) -> Result<()> {
    for z in 0..2u8 {
        if n[4 * z as usize..4 * z as usize + 4].iter().sum::<u64>() == 0 {
            return Err(Error::EmptyInstrumentArm(z));
        }
    }
    Ok(())
}

/// Weights of a linear softmax over the four `(y, t)` cells of one instrument arm,
/// on standardized covariates. Cell 0 is the reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxArm {
    /// `3 × (d + 1)`, intercept first.
    pub coef: Vec<Vec<f64>>,
}

impl SoftmaxArm {
    fn probs(&self, f: &[f64]) -> [f64; 4] {
        let mut logits = [0.0; 4];
        for (l, c) in logits[1..].iter_mut().zip(&self.coef) {
            *l = c.iter().zip(f).map(|(a, b)| a * b).sum();
        }
        softmax_in_place(&mut logits);
        logits
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CondProbModel {
    Pooled {
        p: CondProbs,
    },
    Stratified {
        stratification: Stratification,
        cells: BTreeMap<String, CondProbs>,
        fallback: CondProbs,
    },
    MultinomialLogistic {
        means: Vec<f64>,
        sds: Vec<f64>,
        arms: [SoftmaxArm; 2],
    },
}

fn key_string(k: &CellKey) -> String {
    k.iter().map(i64::to_string).collect::<Vec<_>>().join(",")
}

fn features(x: &[f64], means: &[f64], sds: &[f64]) -> Vec<f64> {
    std::iter::once(1.0)
        .chain(x.iter().zip(means.iter().zip(sds)).map(|(v, (m, s))| (v - m) / s))
        .collect()
}

/// Penalized softmax regression by damped Newton ascent.
///
/// Half a pseudo-observation per class sits at the covariate mean, so the
/// intercept-only fit equals the smoothed frequencies. The intercept is not penalized.
fn fit_softmax(feats: &[Vec<f64>], classes: &[usize]) -> Result<SoftmaxArm> {
    let p = feats.first().map_or(1, Vec::len);
    let dim = 3 * p;
    let mut origin = vec![0.0; p];
    origin[0] = 1.0;
    let mut beta = DVector::<f64>::zeros(dim);

    let objective = |beta: &DVector<f64>| -> f64 {
        let arm = to_arm(beta, p);
        let mut ll = 0.0;
        for (f, &c) in feats.iter().zip(classes) {
            ll += arm.probs(f)[c].ln();
        }
        let pr = arm.probs(&origin);
        ll += SMOOTHING * pr.iter().map(|v| v.ln()).sum::<f64>();
        ll - 0.5 * RIDGE * penalized_norm2(beta, p)
    };

    let mut current = objective(&beta);
    for _ in 0..NEWTON_MAX_ITER {
        let arm = to_arm(&beta, p);
        let mut grad = DVector::<f64>::zeros(dim);
        let mut neg_hess = DMatrix::<f64>::zeros(dim, dim);
        let mut accumulate = |f: &[f64], target: &[f64; 4], w: f64| {
            let pi = arm.probs(f);
            for k in 1..4 {
                let r = w * (target[k] - pi[k]);
                for a in 0..p {
                    grad[(k - 1) * p + a] += r * f[a];
                }
                for l in 1..4 {
                    let h = w * pi[k] * (f64::from(u8::from(k == l)) - pi[l]);
                    for a in 0..p {
                        for b in 0..p {
                            neg_hess[((k - 1) * p + a, (l - 1) * p + b)] += h * f[a] * f[b];
                        }
                    }
                }
            }
        };
        for (f, &c) in feats.iter().zip(classes) {
            let mut target = [0.0; 4];
            target[c] = 1.0;
            accumulate(f, &target, 1.0);
        }
        accumulate(&origin, &[0.25; 4], 4.0 * SMOOTHING);
        for k in 0..3 {
            for a in 1..p {
                let i = k * p + a;
                grad[i] -= RIDGE * beta[i];
                neg_hess[(i, i)] += RIDGE;
            }
        }
        let step = neg_hess
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Numeric("softmax Hessian is not positive definite".into()))?
            .solve(&grad);
        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand = &beta + &step * scale;
            let val = objective(&cand);
            if val >= current - 1e-12 {
                beta = cand;
                current = val;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if !accepted || step.norm() * scale < NEWTON_TOL {
            break;
        }
    }
    Ok(to_arm(&beta, p))
}

fn penalized_norm2(beta: &DVector<f64>, p: usize) -> f64 {
    (0..beta.len()).filter(|i| i % p != 0).map(|i| beta[i] * beta[i]).sum()
}

fn to_arm(beta: &DVector<f64>, p: usize) -> SoftmaxArm {
    SoftmaxArm {
        coef: (0..3).map(|k| beta.rows(k * p, p).iter().copied().collect()).collect(),
    }
}

pub fn fit_condprob_model(dataset: &IvDataset, kind: &ModelKind) -> Result<CondProbModel> {
    let n = cell_counts(&dataset.rows)?;
    require_arms(&n)?;
    match kind {
        ModelKind::Pooled => Ok(CondProbModel::Pooled { p: smoothed(&n)? }),
        ModelKind::Stratified { stratification } => {
            stratification.validate(dataset.d)?;
            let fallback = smoothed(&n)?;
            let mut cells = BTreeMap::new();
            for (key, idx) in stratification.partition(&dataset.rows) {
                let counts = cell_counts(idx.iter().map(|&i| &dataset.rows[i]))?;
                // A cell missing an instrument arm falls back to the pooled slice.
                let mut p = *fallback.as_array();
                for z in 0..2 {
                    let total: u64 = counts[4 * z..4 * z + 4].iter().sum();
                    if total > 0 {
                        let own = smoothed(&counts)?;
                        p[4 * z..4 * z + 4].copy_from_slice(&own.as_array()[4 * z..4 * z + 4]);
                    }
                }
                cells.insert(key_string(&key), CondProbs::new(p)?);
            }
            Ok(CondProbModel::Stratified {
                stratification: stratification.clone(),
                cells,
                fallback,
            })
        }
        ModelKind::MultinomialLogistic => {
            let d = dataset.d;
            let nf = dataset.n() as f64;
            let mut means = vec![0.0; d];
            let mut sds = vec![1.0; d];
            for j in 0..d {
                means[j] = dataset.rows.iter().map(|r| r.x[j]).sum::<f64>() / nf;
                let var = dataset.rows.iter().map(|r| (r.x[j] - means[j]).powi(2)).sum::<f64>() / nf;
                if var > 0.0 {
                    sds[j] = var.sqrt();
                }
            }
            let fit_arm = |z: u8| -> Result<SoftmaxArm> {
                let (feats, classes): (Vec<_>, Vec<_>) = dataset
                    .rows
                    .iter()
                    .filter(|r| r.z == z)
                    .map(|r| (features(&r.x, &means, &sds), 2 * r.y as usize + r.t as usize))
                    .unzip();
                if feats.is_empty() {
                    return Err(Error::EmptyInstrumentArm(z));
                }
                fit_softmax(&feats, &classes)
            };
            let arms = [fit_arm(0)?, fit_arm(1)?];
            Ok(CondProbModel::MultinomialLogistic { means, sds, arms })
        }
    }
}

impl CondProbModel {
    pub fn predict(&self, x: &[f64]) -> Result<CondProbs> {
        match self {
            CondProbModel::Pooled { p } => Ok(*p),
            CondProbModel::Stratified {
                stratification,
                cells,
                fallback,
            } => Ok(cells
                .get(&key_string(&stratification.key(x)))
                .copied()
                .unwrap_or(*fallback)),
            CondProbModel::MultinomialLogistic { means, sds, arms } => {
                if x.len() != means.len() {
                    return Err(Error::Data(format!(
                        "expected {} covariates, got {}",
                        means.len(),
                        x.len()
                    )));
                }
                let f = features(x, means, sds);
                let mut p = [0.0; 8];
                for z in 0..2 {
                    p[4 * z..4 * z + 4].copy_from_slice(&arms[z].probs(&f));
                }
                CondProbs::renormalized(p)
            }
        }
    }
}

impl CondProbSource for CondProbModel {
    fn cond_probs(&self, x: &[f64]) -> Result<CondProbs> {
        self.predict(x)
    }
}
