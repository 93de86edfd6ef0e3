//! Principal strata of a binary instrument, treatment and outcome.
//!
//! A stratum fixes the potential treatments `(T(0), T(1))` and potential
//! outcomes `(Y(0), Y(1))` of a unit. The sixteen strata are indexed by
//! `8·T(0) + 4·T(1) + 2·Y(0) + Y(1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_STRATA: usize = 16;

/// Tolerance on probability sums for exact constructions.
pub const EXACT_SUM_TOL: f64 = 1e-12;
/// Tolerance on probability sums for data-estimated quantities.
pub const ESTIMATED_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StratumIndex(u8);

/// Compliance type, determined by `(T(0), T(1))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreatmentType {
    NeverTaker,
    Complier,
    Defier,
    AlwaysTaker,
}

/// Response type, determined by `(Y(0), Y(1))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutcomeType {
    AlwaysBad,
    Effective,
    Harmful,
    AlwaysGood,
}

impl StratumIndex {
    pub fn new(t0: u8, t1: u8, y0: u8, y1: u8) -> Result<Self> {
        if [t0, t1, y0, y1].iter().any(|&b| b > 1) {
            return Err(Error::Config(format!(
                "stratum bits must be 0 or 1, got ({t0},{t1},{y0},{y1})"
            )));
        }
        Ok(Self(8 * t0 + 4 * t1 + 2 * y0 + y1))
    }

    pub fn from_index(index: usize) -> Result<Self> {
        if index >= NUM_STRATA {
            return Err(Error::Config(format!("stratum index {index} out of range")));
        }
        Ok(Self(index as u8))
    }

    pub fn all() -> impl Iterator<Item = StratumIndex> {
        (0..NUM_STRATA as u8).map(StratumIndex)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// The bit tuple `(T(0), T(1), Y(0), Y(1))`.
    pub fn bits(self) -> (u8, u8, u8, u8) {
        let s = self.0;
        ((s >> 3) & 1, (s >> 2) & 1, (s >> 1) & 1, s & 1)
    }

    /// Potential treatment `T(z)`.
    pub fn treatment(self, z: u8) -> u8 {
        let (t0, t1, _, _) = self.bits();
        if z == 0 {
            t0
        } else {
            t1
        }
    }

    /// Potential outcome `Y(t)`.
    pub fn outcome(self, t: u8) -> u8 {
        let (_, _, y0, y1) = self.bits();
        if t == 0 {
            y0
        } else {
            y1
        }
    }

    /// Observed `(t, y)` under instrument value `z`, by consistency.
    pub fn observe(self, z: u8) -> (u8, u8) {
        let t = self.treatment(z);
        (t, self.outcome(t))
    }

    /// `Y(1) - Y(0)`.
    pub fn effect(self) -> i8 {
        let (_, _, y0, y1) = self.bits();
        y1 as i8 - y0 as i8
    }

    pub fn treatment_type(self) -> TreatmentType {
        match (self.treatment(0), self.treatment(1)) {
            (0, 0) => TreatmentType::NeverTaker,
            (0, 1) => TreatmentType::Complier,
            (1, 0) => TreatmentType::Defier,
            _ => TreatmentType::AlwaysTaker,
        }
    }

    pub fn outcome_type(self) -> OutcomeType {
        match (self.outcome(0), self.outcome(1)) {
            (0, 0) => OutcomeType::AlwaysBad,
            (0, 1) => OutcomeType::Effective,
            (1, 0) => OutcomeType::Harmful,
            _ => OutcomeType::AlwaysGood,
        }
    }
}

/// Probability vector over the sixteen strata.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StrataDist([f64; NUM_STRATA]);

impl StrataDist {
    pub fn new(q: [f64; NUM_STRATA]) -> Result<Self> {
        Self::with_tolerance(q, EXACT_SUM_TOL)
    }

    pub fn with_tolerance(q: [f64; NUM_STRATA], tol: f64) -> Result<Self> {
        if let Some(v) = q.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::InvalidProbabilities(format!(
                "strata entry {v} is negative or not finite"
            )));
        }
        let sum: f64 = q.iter().sum();
        if (sum - 1.0).abs() > tol {
            return Err(Error::InvalidProbabilities(format!(
                "strata probabilities sum to {sum}"
            )));
        }
        Ok(Self(q))
    }

    /// Normalizes a non-negative weight vector.
    pub fn from_weights(w: [f64; NUM_STRATA]) -> Result<Self> {
        let sum: f64 = w.iter().sum();
        if !(sum > 0.0) || w.iter().any(|v| *v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidProbabilities(
                "weights must be finite, non-negative and not all zero".into(),
            ));
        }
        Ok(Self(w.map(|v| v / sum)))
    }

    pub fn uniform() -> Self {
        Self([1.0 / NUM_STRATA as f64; NUM_STRATA])
    }

    pub fn point_mass(s: StratumIndex) -> Self {
        let mut q = [0.0; NUM_STRATA];
        q[s.index()] = 1.0;
        Self(q)
    }

    pub fn probs(&self) -> &[f64; NUM_STRATA] {
        &self.0
    }

    pub fn get(&self, s: StratumIndex) -> f64 {
        self.0[s.index()]
    }

    /// `alpha·self + (1 - alpha)·other`.
    pub fn mix(&self, other: &StrataDist, alpha: f64) -> StrataDist {
        let mut q = [0.0; NUM_STRATA];
        for (i, v) in q.iter_mut().enumerate() {
            *v = alpha * self.0[i] + (1.0 - alpha) * other.0[i];
        }
        StrataDist(q)
    }
}

/// Observational probabilities `p_{yt.z} = P(Y=y, T=t | Z=z)`.
///
/// Stored with each instrument slice contiguous: entry `4z + 2y + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondProbs([f64; 8]);

impl CondProbs {
    #[inline]
    pub fn slot(y: u8, t: u8, z: u8) -> usize {
        4 * z as usize + 2 * y as usize + t as usize
    }

    pub fn new(p: [f64; 8]) -> Result<Self> {
        Self::with_tolerance(p, ESTIMATED_SUM_TOL)
    }

    pub fn with_tolerance(p: [f64; 8], tol: f64) -> Result<Self> {
        if let Some(v) = p.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidProbabilities(format!(
                "conditional probability {v} outside [0, 1]"
            )));
        }
        for z in 0..2 {
            let s: f64 = p[4 * z..4 * z + 4].iter().sum();
            if (s - 1.0).abs() > tol {
                return Err(Error::InvalidProbabilities(format!("z={z} slice sums to {s}")));
            }
        }
        Ok(Self(p))
    }

    /// Builds from a function of `(y, t, z)`.
    pub fn from_fn(f: impl Fn(u8, u8, u8) -> f64) -> Result<Self> {
        let mut p = [0.0; 8];
        for z in 0..2 {
            for y in 0..2 {
                for t in 0..2 {
                    p[Self::slot(y, t, z)] = f(y, t, z);
                }
            }
        }
        Self::new(p)
    }

    /// Clips negatives and rescales each instrument slice to sum to one.
    pub fn renormalized(raw: [f64; 8]) -> Result<Self> {
        let mut p = raw.map(|v| if v.is_finite() { v.max(0.0) } else { f64::NAN });
        if p.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidProbabilities("non-finite entry".into()));
        }
        for z in 0..2 {
            let s: f64 = p[4 * z..4 * z + 4].iter().sum();
            if s <= 0.0 {
                return Err(Error::InvalidProbabilities(format!("z={z} slice is all zero")));
            }
            for v in &mut p[4 * z..4 * z + 4] {
                *v /= s;
            }
        }
        Self::with_tolerance(p, EXACT_SUM_TOL)
    }

    #[inline]
    pub fn get(&self, y: u8, t: u8, z: u8) -> f64 {
        self.0[Self::slot(y, t, z)]
    }

    pub fn as_array(&self) -> &[f64; 8] {
        &self.0
    }

    pub fn slice(&self, z: u8) -> &[f64] {
        &self.0[4 * z as usize..4 * z as usize + 4]
    }
}

/// Observational probabilities induced by a strata distribution.
pub fn strata_to_condprobs(q: &StrataDist) -> CondProbs {
    let mut p = [0.0; 8];
    for s in StratumIndex::all() {
        let mass = q.get(s);
        for z in 0..2 {
            let (t, y) = s.observe(z);
            p[CondProbs::slot(y, t, z)] += mass;
        }
    }
    CondProbs(p)
}

/// `E[Y(1) - Y(0)]` under a strata distribution.
pub fn sate_of_strata(q: &StrataDist) -> f64 {
    StratumIndex::all().map(|s| q.get(s) * s.effect() as f64).sum()
}

/// Effects `Y(1) - Y(0)` of all strata as reals, by index.
pub fn effect_vector() -> [f64; NUM_STRATA] {
    let mut c = [0.0; NUM_STRATA];
    for s in StratumIndex::all() {
        c[s.index()] = s.effect() as f64;
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn s(t0: u8, t1: u8, y0: u8, y1: u8) -> StratumIndex {
        StratumIndex::new(t0, t1, y0, y1).unwrap()
    }

    #[test]
    fn encoding_examples() {
        assert_eq!(s(0, 0, 0, 0).index(), 0);
        assert_eq!(s(0, 1, 0, 1).index(), 5);
        assert!(StratumIndex::new(2, 0, 0, 0).is_err());
        assert!(StratumIndex::from_index(16).is_err());
    }

    #[test]
    fn encoding_is_a_bijection() {
        for t0 in 0..2 {
            for t1 in 0..2 {
                for y0 in 0..2 {
                    for y1 in 0..2 {
                        assert_eq!(s(t0, t1, y0, y1).bits(), (t0, t1, y0, y1));
                    }
                }
            }
        }
    }

    #[test]
    fn effects() {
        assert_eq!(s(0, 1, 0, 1).effect(), 1);
        assert_eq!(s(1, 1, 1, 0).effect(), -1);
        for st in StratumIndex::all() {
            let (_, _, y0, y1) = st.bits();
            if y0 == y1 {
                assert_eq!(st.effect(), 0);
            }
        }
        assert_eq!(s(0, 1, 0, 1).treatment_type(), TreatmentType::Complier);
        assert_eq!(s(1, 1, 1, 0).outcome_type(), OutcomeType::Harmful);
    }

    #[test]
    fn complier_effective_point_mass() {
        let q = StrataDist::point_mass(s(0, 1, 0, 1));
        let p = strata_to_condprobs(&q);
        for z in 0..2u8 {
            for y in 0..2u8 {
                for t in 0..2u8 {
                    let expect = if y == z && t == z { 1.0 } else { 0.0 };
                    assert_eq!(p.get(y, t, z), expect);
                }
            }
        }
        assert_eq!(sate_of_strata(&q), 1.0);
    }

    #[test]
    fn never_taker_always_good() {
        let p = strata_to_condprobs(&StrataDist::point_mass(s(0, 0, 1, 1)));
        assert_eq!(p.get(1, 0, 0), 1.0);
        assert_eq!(p.get(1, 0, 1), 1.0);
    }

    #[test]
    fn uniform_strata_gives_quarter_cells() {
        // Each (y, t, z) cell is hit by exactly 4 of the 16 strata.
        let mut hits = [0usize; 8];
        for st in StratumIndex::all() {
            for z in 0..2 {
                let (t, y) = st.observe(z);
                hits[CondProbs::slot(y, t, z)] += 1;
            }
        }
        assert_eq!(hits, [4; 8]);
        let p = strata_to_condprobs(&StrataDist::uniform());
        for v in p.as_array() {
            assert!((v - 0.25).abs() < 1e-15);
        }
        assert_eq!(sate_of_strata(&StrataDist::uniform()), 0.0);
    }

    #[test]
    fn ef_hf_mixture() {
        let mut q = [0.0; 16];
        q[s(0, 0, 0, 1).index()] = 0.7;
        q[s(1, 0, 1, 0).index()] = 0.3;
        let q = StrataDist::new(q).unwrap();
        assert!((sate_of_strata(&q) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(StrataDist::new([0.1; 16]).is_err());
        let mut bad = [0.0; 16];
        bad[0] = 1.5;
        bad[1] = -0.5;
        assert!(StrataDist::new(bad).is_err());
        assert!(CondProbs::new([0.5, 0.5, 0.0, 0.0, 0.3, 0.3, 0.3, 0.0]).is_err());
        let r = CondProbs::renormalized([1.0, 1.0, 0.0, -0.1, 2.0, 0.0, 0.0, 2.0]).unwrap();
        assert_eq!(r.slice(0), &[0.5, 0.5, 0.0, 0.0]);
        assert_eq!(r.slice(1), &[0.5, 0.0, 0.0, 0.5]);
    }

    fn strata_strategy() -> impl Strategy<Value = StrataDist> {
        prop::array::uniform16(0.0f64..1.0).prop_filter_map("nonzero", |w| StrataDist::from_weights(w).ok())
    }

    proptest! {
        #[test]
        fn slices_sum_to_one(q in strata_strategy()) {
            let p = strata_to_condprobs(&q);
            for z in 0..2u8 {
                let sum: f64 = p.slice(z).iter().sum();
                prop_assert!((sum - 1.0).abs() < EXACT_SUM_TOL);
            }
        }

        #[test]
        fn sate_in_unit_range(q in strata_strategy()) {
            let v = sate_of_strata(&q);
            prop_assert!((-1.0..=1.0).contains(&v));
        }

        #[test]
        fn map_is_linear(a in strata_strategy(), b in strata_strategy(), alpha in 0.0f64..=1.0) {
            let lhs = strata_to_condprobs(&a.mix(&b, alpha));
            let pa = strata_to_condprobs(&a);
            let pb = strata_to_condprobs(&b);
            for i in 0..8 {
                let rhs = alpha * pa.as_array()[i] + (1.0 - alpha) * pb.as_array()[i];
                prop_assert!((lhs.as_array()[i] - rhs).abs() < 1e-12);
            }
        }
    }
}
