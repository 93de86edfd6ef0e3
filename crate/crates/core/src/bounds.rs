//! Closed-form sharp bounds on the average treatment effect for a binary IV.
//!
//! The conditional bounds are `[max_j φ_{l,j}(p), min_j φ_{u,j}(p)]` over the
//! eight lower and eight upper linear expressions in `p_{yt.z}`. Expressions
//! are indexed 1..=8 in the accessor methods.

use serde::{Deserialize, Serialize};

use crate::dataset::{IvDataset, Row};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::strata::CondProbs;

/// Tolerance on the instrumental inequalities and on bound crossing.
/// Endpoints within this distance of each other collapse to their midpoint.
pub const IV_INEQUALITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Lower,
    Upper,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiVector {
    pub values: [f64; 8],
    pub side: Side,
}

impl PhiVector {
    /// Expression `j` in 1..=8.
    pub fn get(&self, j: usize) -> f64 {
        assert!((1..=8).contains(&j), "expression index {j} outside 1..=8");
        self.values[j - 1]
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// The bound this vector induces: the max for lower, the min for upper.
    pub fn bound(&self) -> f64 {
        match self.side {
            Side::Lower => self.max(),
            Side::Upper => self.min(),
        }
    }
}

pub fn phi_lower(p: &CondProbs) -> PhiVector {
    let g = |y, t, z| p.get(y, t, z);
    PhiVector {
        values: [
            g(1, 1, 1) + g(0, 0, 0) - 1.0,
            g(1, 1, 0) + g(0, 0, 1) - 1.0,
            -g(0, 1, 1) - g(1, 0, 1),
            -g(0, 1, 0) - g(1, 0, 0),
            g(1, 1, 0) - g(1, 1, 1) - g(1, 0, 1) - g(0, 1, 0) - g(1, 0, 0),
            g(1, 1, 1) - g(1, 1, 0) - g(1, 0, 0) - g(0, 1, 1) - g(1, 0, 1),
            g(0, 0, 1) - g(0, 1, 1) - g(1, 0, 1) - g(0, 1, 0) - g(0, 0, 0),
            g(0, 0, 0) - g(0, 1, 0) - g(1, 0, 0) - g(0, 1, 1) - g(0, 0, 1),
        ],
        side: Side::Lower,
    }
}

pub fn phi_upper(p: &CondProbs) -> PhiVector {
    let g = |y, t, z| p.get(y, t, z);
    PhiVector {
        values: [
            1.0 - g(0, 1, 1) - g(1, 0, 0),
            1.0 - g(0, 1, 0) - g(1, 0, 1),
            g(1, 1, 1) + g(0, 0, 1),
            g(1, 1, 0) + g(0, 0, 0),
            -g(0, 1, 0) + g(0, 1, 1) + g(0, 0, 1) + g(1, 1, 0) + g(0, 0, 0),
            -g(0, 1, 1) + g(1, 1, 1) + g(0, 0, 1) + g(0, 1, 0) + g(0, 0, 0),
            -g(1, 0, 1) + g(1, 1, 1) + g(0, 0, 1) + g(1, 1, 0) + g(1, 0, 0),
            -g(1, 0, 0) + g(1, 1, 0) + g(0, 0, 0) + g(1, 1, 1) + g(1, 0, 1),
        ],
        side: Side::Upper,
    }
}

/// Largest violation of the instrumental inequalities
/// `p_{0t.z} + p_{1t.z'} <= 1` over `t` and `z != z'`. Non-positive iff `p`
/// is compatible with some strata distribution.
pub fn instrumental_excess(p: &CondProbs) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for t in 0..2 {
        worst = worst
            .max(p.get(0, t, 0) + p.get(1, t, 1) - 1.0)
            .max(p.get(1, t, 0) + p.get(0, t, 1) - 1.0);
    }
    worst
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CondBounds {
    Valid(Interval),
    /// `p` is incompatible with every IV-consistent strata distribution:
    /// either the bounds cross, or an instrumental inequality is violated
    /// (which can happen with `lower <= upper`).
    Crossed {
        lower: f64,
        upper: f64,
        iv_excess: f64,
    },
}

impl CondBounds {
    pub fn is_crossed(&self) -> bool {
        matches!(self, CondBounds::Crossed { .. })
    }

    pub fn interval(&self) -> Option<Interval> {
        match self {
            CondBounds::Valid(i) => Some(*i),
            CondBounds::Crossed { .. } => None,
        }
    }

    /// The raw `(max φ_l, min φ_u)` pair, crossed or not.
    pub fn endpoints(&self) -> (f64, f64) {
        match *self {
            CondBounds::Valid(i) => (i.lower(), i.upper()),
            CondBounds::Crossed { lower, upper, .. } => (lower, upper),
        }
    }
}

pub fn conditional_bounds(p: &CondProbs) -> CondBounds {
    let lower = phi_lower(p).max();
    let upper = phi_upper(p).min();
    let iv_excess = instrumental_excess(p);
    if lower > upper + IV_INEQUALITY_TOL || iv_excess > IV_INEQUALITY_TOL {
        return CondBounds::Crossed {
            lower,
            upper,
            iv_excess,
        };
    }
    let (lower, upper) = if lower > upper {
        let mid = 0.5 * (lower + upper);
        (mid, mid)
    } else {
        (lower, upper)
    };
    CondBounds::Valid(Interval::new(lower, upper).expect("finite, ordered endpoints"))
}

/// Maps a covariate vector to estimated observational probabilities.
pub trait CondProbSource {
    fn cond_probs(&self, x: &[f64]) -> Result<CondProbs>;
}

impl<F> CondProbSource for F
where
    F: Fn(&[f64]) -> Result<CondProbs>,
{
    fn cond_probs(&self, x: &[f64]) -> Result<CondProbs> {
        self(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SateBounds {
    pub interval: Interval,
    pub crossed_rows: usize,
    pub n_rows: usize,
}

/// Averages per-row conditional bounds. Crossed rows contribute the Manski
/// range `[-w, w]` of the unit-scale outcome, with `w = 1`.
pub fn sate_bounds_from_probs<'a>(probs: impl IntoIterator<Item = &'a CondProbs>) -> Result<SateBounds> {
    let (mut lo, mut hi, mut crossed, mut n) = (0.0, 0.0, 0usize, 0usize);
    for p in probs {
        match conditional_bounds(p) {
            CondBounds::Valid(i) => {
                lo += i.lower();
                hi += i.upper();
            }
            CondBounds::Crossed { .. } => {
                crossed += 1;
                lo -= 1.0;
                hi += 1.0;
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Data("cannot bound the SATE of an empty dataset".into()));
    }
    Ok(SateBounds {
        interval: Interval::new(lo / n as f64, hi / n as f64)?,
        crossed_rows: crossed,
        n_rows: n,
    })
}

/// Dataset-level SATE bounds: the mean of conditional bounds at each row's covariates.
pub fn sate_bounds(dataset: &IvDataset, model: &dyn CondProbSource) -> Result<SateBounds> {
    let probs = dataset
        .rows
        .iter()
        .map(|r| model.cond_probs(&r.x))
        .collect::<Result<Vec<_>>>()?;
    sate_bounds_from_probs(&probs)
}

pub fn manski_width(y_min: f64, y_max: f64) -> f64 {
    y_max - y_min
}

/// Midpoints of a uniform `J`-cell grid over `(0, 1)`.
pub fn threshold_grid(j: usize) -> Vec<f64> {
    (0..j).map(|k| (k as f64 + 0.5) / j as f64).collect()
}

pub const DEFAULT_THRESHOLDS: usize = 64;

/// Bounds for a bounded continuous outcome in `[0, 1]`.
///
/// For each threshold `s` of the grid the outcome is binarized as `1{y >= s}`,
/// `fit` builds a model on the binarized data and the SATE bounds are computed.
/// The result averages endpoints over thresholds, a Riemann approximation of
/// `E[Y(1) - Y(0)] = ∫ P(Y(1) >= s) - P(Y(0) >= s) ds`. Binary outcomes
/// short-circuit to a single threshold.
pub fn continuous_outcome_bounds<M, F>(dataset: &IvDataset, fit: F, thresholds: usize) -> Result<SateBounds>
where
    M: CondProbSource,
    F: Fn(&IvDataset) -> Result<M>,
{
    if thresholds < 2 {
        return Err(Error::Config("threshold grid needs J >= 2".into()));
    }
    if dataset.is_binary_outcome() {
        let model = fit(dataset)?;
        return sate_bounds(dataset, &model);
    }
    let grid = threshold_grid(thresholds);
    let (mut lo, mut hi, mut crossed) = (0.0, 0.0, 0usize);
    for &s in &grid {
        let bin = dataset.binarized(s);
        let model = fit(&bin)?;
        let b = sate_bounds(&bin, &model)?;
        lo += b.interval.lower();
        hi += b.interval.upper();
        crossed += b.crossed_rows;
    }
    let j = grid.len() as f64;
    Ok(SateBounds {
        interval: Interval::new(lo / j, hi / j)?,
        crossed_rows: crossed,
        n_rows: dataset.n(),
    })
}

/// Per-row exact probabilities as a model, for datasets that carry strata.
pub struct RowwiseProbs<'a> {
    rows: &'a [Row],
    probs: &'a [CondProbs],
}

impl<'a> RowwiseProbs<'a> {
    pub fn new(rows: &'a [Row], probs: &'a [CondProbs]) -> Self {
        Self { rows, probs }
    }
}

impl CondProbSource for RowwiseProbs<'_> {
    fn cond_probs(&self, x: &[f64]) -> Result<CondProbs> {
        self.rows
            .iter()
            .position(|r| r.x.as_slice() == x)
            .map(|i| self.probs[i])
            .ok_or_else(|| Error::Data("row not found in rowwise model".into()))
    }
}
