//! Strata linear program: optimize the ATE over all strata distributions that
//! reproduce a given `p`.
//!
//! Solved with a dense two-phase tableau simplex under Bland's rule. Of the
//! eight observational equalities only seven are independent (each z-slice
//! sums to one), so the last `z = 1` row is dropped before solving.

use serde::{Deserialize, Serialize};

use crate::bounds::{phi_lower, phi_upper};
use crate::error::{Error, Result};
use crate::interval::Interval;
use crate::strata::{effect_vector, CondProbs, StrataDist, StratumIndex, NUM_STRATA};

/// Tolerance on equality-constraint residuals and the phase-one objective.
pub const FEASIBILITY_TOL: f64 = 1e-9;
const PIVOT_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct StrataLp {
    pub objective: [f64; NUM_STRATA],
    /// Row `CondProbs::slot(y, t, z)` selects the strata observed as `(t, y)` under `z`.
    pub eq_constraints: [[f64; NUM_STRATA]; 8],
    pub rhs: [f64; 8],
}

impl StrataLp {
    /// Row indices used by the solver: all of `z = 0`, the first three of `z = 1`.
    pub const INDEPENDENT_ROWS: [usize; 7] = [0, 1, 2, 3, 4, 5, 6];

    pub fn independent_system(&self) -> (Vec<Vec<f64>>, Vec<f64>) {
        let a = Self::INDEPENDENT_ROWS
            .iter()
            .map(|&r| self.eq_constraints[r].to_vec())
            .collect();
        let b = Self::INDEPENDENT_ROWS.iter().map(|&r| self.rhs[r]).collect();
        (a, b)
    }

    /// Largest absolute residual of the full eight-row system at `q`.
    pub fn residual(&self, q: &[f64; NUM_STRATA]) -> f64 {
        self.eq_constraints
            .iter()
            .zip(&self.rhs)
            .map(|(row, &b)| (row.iter().zip(q).map(|(a, x)| a * x).sum::<f64>() - b).abs())
            .fold(0.0, f64::max)
    }
}

pub fn build_lp(p: &CondProbs) -> StrataLp {
    let mut eq = [[0.0; NUM_STRATA]; 8];
    for s in StratumIndex::all() {
        for z in 0..2 {
            let (t, y) = s.observe(z);
            eq[CondProbs::slot(y, t, z)][s.index()] = 1.0;
        }
    }
    StrataLp {
        objective: effect_vector(),
        eq_constraints: eq,
        rhs: *p.as_array(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LpStatus {
    Optimal,
    Infeasible,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub value: Option<f64>,
    pub witness: Option<StrataDist>,
}

impl LpSolution {
    fn infeasible() -> Self {
        Self {
            status: LpStatus::Infeasible,
            value: None,
            witness: None,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == LpStatus::Optimal
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimplexOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
}

struct Tableau {
    rows: Vec<Vec<f64>>,
    basis: Vec<usize>,
    cols: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let piv = self.rows[r][c];
        for v in self.rows[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
        self.basis[r] = c;
    }

    fn rhs(&self, i: usize) -> f64 {
        self.rows[i][self.cols]
    }

    fn objective(&self, cost: &[f64]) -> f64 {
        self.basis.iter().enumerate().map(|(i, &b)| cost[b] * self.rhs(i)).sum()
    }

    /// Bland's rule iterations on `cost` over columns `0..allowed`.
    /// Returns false if unbounded.
    fn optimize(&mut self, cost: &[f64], allowed: usize) -> bool {
        loop {
            let entering = (0..allowed).find(|&j| {
                if self.basis.contains(&j) {
                    return false;
                }
                let reduced = cost[j]
                    - self
                        .basis
                        .iter()
                        .enumerate()
                        .map(|(i, &b)| cost[b] * self.rows[i][j])
                        .sum::<f64>();
                reduced < -PIVOT_EPS
            });
            let Some(c) = entering else { return true };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows.len() {
                let a = self.rows[i][c];
                if a > PIVOT_EPS {
                    let ratio = self.rhs(i) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - PIVOT_EPS || (ratio <= best + PIVOT_EPS && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            match leave {
                Some((r, _)) => self.pivot(r, c),
                None => return false,
            }
        }
    }
}

/// Minimizes `c·x` subject to `A x = b`, `x >= 0`, with `b >= 0`.
pub fn simplex(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> SimplexOutcome {
    let m = a.len();
    let n = c.len();
    let cols = n + m;
    let mut rows = Vec::with_capacity(m);
    for (i, (ai, &bi)) in a.iter().zip(b).enumerate() {
        let sign = if bi < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; cols + 1];
        for (j, &v) in ai.iter().enumerate() {
            row[j] = sign * v;
        }
        row[n + i] = 1.0;
        row[cols] = sign * bi;
        rows.push(row);
    }
    let mut tab = Tableau {
        rows,
        basis: (n..n + m).collect(),
        cols,
    };

    let mut phase1 = vec![0.0; cols];
    phase1[n..].fill(1.0);
    tab.optimize(&phase1, cols);
    if tab.objective(&phase1) > FEASIBILITY_TOL {
        return SimplexOutcome::Infeasible;
    }
    // Drive artificials out of the basis; rows where that is impossible are redundant.
    let mut i = 0;
    while i < tab.rows.len() {
        if tab.basis[i] >= n {
            match (0..n).find(|&j| tab.rows[i][j].abs() > FEASIBILITY_TOL) {
                Some(j) => {
                    tab.pivot(i, j);
                    i += 1;
                }
                None => {
                    tab.rows.remove(i);
                    tab.basis.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }

    let mut phase2 = vec![0.0; cols];
    phase2[..n].copy_from_slice(c);
    if !tab.optimize(&phase2, n) {
        return SimplexOutcome::Unbounded;
    }
    let mut x = vec![0.0; n];
    for (i, &bcol) in tab.basis.iter().enumerate() {
        x[bcol] = tab.rhs(i).max(0.0);
    }
    let value = c.iter().zip(&x).map(|(ci, xi)| ci * xi).sum();
    SimplexOutcome::Optimal { x, value }
}

fn solve_direction(lp: &StrataLp, sign: f64) -> Result<LpSolution> {
    let (a, b) = lp.independent_system();
    let c: Vec<f64> = lp.objective.iter().map(|v| sign * v).collect();
    match simplex(&a, &b, &c) {
        SimplexOutcome::Infeasible => Ok(LpSolution::infeasible()),
        SimplexOutcome::Unbounded => Err(Error::Numeric("strata LP reported unbounded over a simplex".into())),
        SimplexOutcome::Optimal { x, .. } => {
            let q: [f64; NUM_STRATA] = x.try_into().expect("sixteen variables");
            let residual = lp.residual(&q);
            if residual > FEASIBILITY_TOL {
                return Err(Error::Numeric(format!(
                    "LP witness residual {residual:e} exceeds tolerance"
                )));
            }
            let witness = StrataDist::with_tolerance(q, FEASIBILITY_TOL)?;
            let value = lp.objective.iter().zip(&q).map(|(c, x)| c * x).sum();
            Ok(LpSolution {
                status: LpStatus::Optimal,
                value: Some(value),
                witness: Some(witness),
            })
        }
    }
}

/// `(min, max)` of the ATE over strata distributions consistent with `p`.
/// `p` is renormalized per z-slice first.
pub fn solve_min_max(p: &CondProbs) -> Result<(LpSolution, LpSolution)> {
    let p = CondProbs::renormalized(*p.as_array())?;
    let lp = build_lp(&p);
    let min = solve_direction(&lp, 1.0)?;
    let max = solve_direction(&lp, -1.0)?;
    Ok((min, max))
}

/// The LP bounds as an interval, `None` when infeasible.
pub fn lp_bounds(p: &CondProbs) -> Result<Option<Interval>> {
    let (min, max) = solve_min_max(p)?;
    match (min.value, max.value) {
        (Some(lo), Some(hi)) => Ok(Some(Interval::new(lo, hi.max(lo))?)),
        _ => Ok(None),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SharpnessReport {
    pub lower_gap: f64,
    pub upper_gap: f64,
}

/// Compares LP optima with the closed-form endpoints. Errors if either gap exceeds `tol`.
pub fn check_sharpness(p: &CondProbs, tol: f64) -> Result<SharpnessReport> {
    let (min, max) = solve_min_max(p)?;
    let (Some(lo), Some(hi)) = (min.value, max.value) else {
        return Err(Error::Contract("sharpness check needs a feasible p".into()));
    };
    let report = SharpnessReport {
        lower_gap: (lo - phi_lower(p).max()).abs(),
        upper_gap: (hi - phi_upper(p).min()).abs(),
    };
    if report.lower_gap > tol || report.upper_gap > tol {
        return Err(Error::Sharpness {
            lower_gap: report.lower_gap,
            upper_gap: report.upper_gap,
            tol,
        });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strata::strata_to_condprobs;

    #[test]
    fn incidence_structure() {
        let lp = build_lp(&CondProbs::new([0.25; 8]).unwrap());
        let ones: f64 = lp.eq_constraints.iter().flatten().sum();
        assert_eq!(ones, 32.0);
        for row in &lp.eq_constraints {
            assert_eq!(row.iter().sum::<f64>(), 4.0);
        }
        for z in 0..2u8 {
            for s in 0..NUM_STRATA {
                let hits: f64 = (0..2)
                    .flat_map(|y| (0..2).map(move |t| (y, t)))
                    .map(|(y, t)| lp.eq_constraints[CondProbs::slot(y, t, z)][s])
                    .sum();
                assert_eq!(hits, 1.0);
            }
        }
        let row = lp.eq_constraints[CondProbs::slot(0, 0, 0)];
        for s in StratumIndex::all() {
            let (t0, _, y0, _) = s.bits();
            assert_eq!(row[s.index()] == 1.0, t0 == 0 && y0 == 0);
        }
    }

    #[test]
    fn uniform_and_point_mass() {
        let (lo, hi) = solve_min_max(&strata_to_condprobs(&StrataDist::uniform())).unwrap();
        assert!((lo.value.unwrap() + 0.5).abs() < 1e-12);
        assert!((hi.value.unwrap() - 0.5).abs() < 1e-12);
        let ce = StrataDist::point_mass(StratumIndex::new(0, 1, 0, 1).unwrap());
        let (lo, hi) = solve_min_max(&strata_to_condprobs(&ce)).unwrap();
        assert_eq!(lo.value, Some(1.0));
        assert_eq!(hi.value, Some(1.0));
        let r = check_sharpness(&strata_to_condprobs(&ce), 1e-12).unwrap();
        assert_eq!((r.lower_gap, r.upper_gap), (0.0, 0.0));
    }

    #[test]
    fn contradictory_p_is_infeasible() {
        let p = CondProbs::from_fn(|y, t, z| match (y, t, z) {
            (1, 1, 0) | (0, 1, 1) => 1.0,
            _ => 0.0,
        })
        .unwrap();
        let (lo, hi) = solve_min_max(&p).unwrap();
        assert_eq!(lo.status, LpStatus::Infeasible);
        assert_eq!(hi.status, LpStatus::Infeasible);
        assert!(check_sharpness(&p, 1e-8).is_err());
    }

    #[test]
    fn witnesses_reproduce_p() {
        let q = StrataDist::from_weights([
            1.0, 2.0, 0.5, 0.1, 3.0, 1.0, 0.0, 0.2, 0.7, 0.3, 1.1, 0.0, 2.2, 0.4, 0.9, 1.3,
        ])
        .unwrap();
        let p = strata_to_condprobs(&q);
        let (lo, hi) = solve_min_max(&p).unwrap();
        for sol in [lo, hi] {
            let w = sol.witness.unwrap();
            let pw = strata_to_condprobs(&w);
            for (a, b) in pw.as_array().iter().zip(p.as_array()) {
                assert!((a - b).abs() < 1e-9);
            }
            let v: f64 = w.probs().iter().zip(effect_vector()).map(|(q, e)| q * e).sum();
            assert!((v - sol.value.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn deterministic() {
        let q = StrataDist::from_weights([0.3; 16])
            .unwrap()
            .mix(&StrataDist::point_mass(StratumIndex::from_index(9).unwrap()), 0.4);
        let p = strata_to_condprobs(&q);
        assert_eq!(solve_min_max(&p).unwrap(), solve_min_max(&p).unwrap());
    }

    #[test]
    fn generic_simplex_small_problem() {
        // min -x0 - x1 s.t. x0 + x2 = 1, x1 + x3 = 2
        let a = vec![vec![1.0, 0.0, 1.0, 0.0], vec![0.0, 1.0, 0.0, 1.0]];
        match simplex(&a, &[1.0, 2.0], &[-1.0, -1.0, 0.0, 0.0]) {
            SimplexOutcome::Optimal { value, .. } => assert!((value + 3.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            simplex(&[vec![1.0, -1.0]], &[1.0], &[0.0, -1.0]),
            SimplexOutcome::Unbounded
        );
        assert_eq!(
            simplex(&[vec![1.0, 1.0]], &[-1.0], &[0.0, 0.0]),
            SimplexOutcome::Infeasible
        );
    }
}
