//! Random IV-consistent data-generating processes with known SATE.
//!
//! A draw builds a base table, takes `d` of its columns as covariates and 16
//! more as strata logits, recenters the logits toward a sparse Dirichlet
//! target, and attaches a covariate-only instrument propensity.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bounds::{conditional_bounds, CondBounds};
use crate::dataset::{IvDataset, Labels, Row};
use crate::error::{Error, Result};
use crate::functions::{Linear, TanhMlp};
use crate::rng::{stream, StreamRng};
use crate::sampling::{categorical, dirichlet, sigmoid, softmax_in_place, standard_normal};
use crate::strata::{sate_of_strata, strata_to_condprobs, StrataDist, StratumIndex, NUM_STRATA};

/// Floor applied to probabilities before taking logs.
pub const LOG_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnFamily {
    Gaussian,
    Uniform,
    TanhNetwork,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaseTable {
    /// Row-major `n × d`.
    pub values: Vec<Vec<f64>>,
    pub families: Vec<ColumnFamily>,
}

/// Columns are standardized draws from a per-column family. Gaussian and
/// network columns are functions of a shared `2d`-dimensional latent noise
/// vector, so columns are dependent.
pub fn sample_base_table(seed: u64, n: usize, d: usize) -> Result<BaseTable> {
    if n == 0 || d == 0 {
        return Err(Error::Config("base table needs n >= 1 and d >= 1".into()));
    }
    let mut rng = stream(seed, "prior/base-table");
    let latent_dim = 2 * d;
    let families: Vec<ColumnFamily> = (0..d)
        .map(|_| match rng.random_range(0..3) {
            0 => ColumnFamily::Gaussian,
            1 => ColumnFamily::Uniform,
            _ => ColumnFamily::TanhNetwork,
        })
        .collect();
    enum Col {
        Lin(Linear),
        Unif,
        Net(TanhMlp),
    }
    let cols: Vec<Col> = families
        .iter()
        .map(|f| match f {
            ColumnFamily::Gaussian => Col::Lin(Linear::gaussian(&mut rng, latent_dim, 1.0)),
            ColumnFamily::Uniform => Col::Unif,
            ColumnFamily::TanhNetwork => Col::Net(TanhMlp::random(&mut rng, latent_dim, latent_dim)),
        })
        .collect();

    let mut values = Vec::with_capacity(n);
    let mut eps = vec![0.0; latent_dim];
    for _ in 0..n {
        eps.iter_mut().for_each(|e| *e = standard_normal(&mut rng));
        let row = cols
            .iter()
            .map(|c| match c {
                Col::Lin(l) => l.eval(&eps),
                Col::Unif => rng.random_range(-1.0..1.0),
                Col::Net(m) => m.eval(&eps),
            })
            .collect();
        values.push(row);
    }
    standardize_columns(&mut values);
    Ok(BaseTable { values, families })
}

fn standardize_columns(values: &mut [Vec<f64>]) {
    let n = values.len();
    if n < 2 {
        values.iter_mut().flatten().for_each(|v| *v = 0.0);
        return;
    }
    let d = values[0].len();
    for j in 0..d {
        let mean = values.iter().map(|r| r[j]).sum::<f64>() / n as f64;
        let var = values.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for r in values.iter_mut() {
            r[j] = (r[j] - mean) / sd;
        }
    }
}

/// The random function `f_ψ` behind `P(Z = 1 | X) = sigmoid(f_ψ(X))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstrumentFn {
    pub linear: Linear,
    pub network: Option<TanhMlp>,
    pub scale: f64,
}

impl InstrumentFn {
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Self {
        let linear = Linear::gaussian(rng, d, 1.0 / (d.max(1) as f64).sqrt());
        let network = rng.random_bool(0.5).then(|| TanhMlp::random(rng, d, 8));
        let scale = (rng.random_range(0.25f64.ln()..=4f64.ln())).exp();
        Self { linear, network, scale }
    }

    pub fn zero(d: usize) -> Self {
        Self {
            linear: Linear {
                w: vec![0.0; d],
                b: 0.0,
            },
            network: None,
            scale: 1.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let raw = self.linear.eval(x) + self.network.as_ref().map_or(0.0, |m| m.eval(x));
        (self.scale * raw).clamp(-30.0, 30.0)
    }

    pub fn propensity(&self, x: &[f64]) -> f64 {
        sigmoid(self.eval(x))
    }
}

/// Propensities `sigmoid(f_ψ(x_i))` for a freshly drawn `f_ψ`. Reads covariates only.
pub fn instrument_propensity(covariates: &[Vec<f64>], seed: u64) -> Vec<f64> {
    let d = covariates.first().map_or(0, Vec::len);
    let mut rng = stream(seed, "prior/instrument-fn");
    let f = InstrumentFn::random(&mut rng, d);
    covariates.iter().map(|x| f.propensity(x)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecenterSpec {
    pub gamma: f64,
    #[serde(default)]
    pub target: Option<[f64; NUM_STRATA]>,
}

impl Default for RecenterSpec {
    fn default() -> Self {
        Self {
            gamma: 0.1,
            target: None,
        }
    }
}

impl RecenterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config(format!("gamma must be positive, got {}", self.gamma)));
        }
        if let Some(t) = &self.target {
            StrataDist::with_tolerance(*t, 1e-9)?;
        }
        Ok(())
    }
}

/// Adds `c = log p̄ − log mean_i softmax(g0_i)` to every row of logits.
///
/// `p̄` is `spec.target` or a `Dirichlet(γ)` draw; both are floored at
/// [`LOG_FLOOR`], as are the softmax outputs entering the mean.
pub fn recenter_logits(
    g0: &[[f64; NUM_STRATA]],
    spec: &RecenterSpec,
    rng: &mut StreamRng,
) -> Result<Vec<[f64; NUM_STRATA]>> {
    spec.validate()?;
    if g0.is_empty() {
        return Err(Error::Config("cannot recenter an empty logit table".into()));
    }
    if g0.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    let target = spec.target.unwrap_or_else(|| dirichlet(rng, &[spec.gamma; NUM_STRATA]));
    let mut mean = [0.0; NUM_STRATA];
    for row in g0 {
        let mut p = *row;
        softmax_in_place(&mut p);
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v.max(LOG_FLOOR) / g0.len() as f64;
        }
    }
    if let Some(k) = mean.iter().position(|m| *m <= 0.0) {
        return Err(Error::Numeric(format!("current mean of stratum {k} is zero")));
    }
    let mut shift = [0.0; NUM_STRATA];
    for k in 0..NUM_STRATA {
        shift[k] = target[k].max(LOG_FLOOR).ln() - mean[k].ln();
    }
    Ok(g0
        .iter()
        .map(|row| {
            let mut out = *row;
            out.iter_mut().zip(shift).for_each(|(v, c)| *v += c);
            out
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    pub n: usize,
    pub d_min: usize,
    pub d_max: usize,
    pub gamma: f64,
    /// Apply the log-domain recentering step.
    pub recenter: bool,
    #[serde(default)]
    pub target: Option<[f64; NUM_STRATA]>,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            n: 1024,
            d_min: 5,
            d_max: 10,
            gamma: 0.1,
            recenter: true,
            target: None,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be at least 1".into()));
        }
        if self.d_min == 0 || self.d_min > self.d_max {
            return Err(Error::Config(format!(
                "need 1 <= d_min <= d_max, got {}..{}",
                self.d_min, self.d_max
            )));
        }
        RecenterSpec {
            gamma: self.gamma,
            target: self.target,
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorDgp {
    pub n: usize,
    pub d: usize,
    pub covariates: Vec<Vec<f64>>,
    pub instrument_propensity: Vec<f64>,
    pub strata_probs: Vec<StrataDist>,
    pub sate: f64,
    pub seed: u64,
}

pub fn draw_dgp(seed: u64, cfg: &PriorConfig) -> Result<PriorDgp> {
    cfg.validate()?;
    let mut rng = stream(seed, "prior/shape");
    let d = rng.random_range(cfg.d_min..=cfg.d_max);
    let base = sample_base_table(seed, cfg.n, d + NUM_STRATA)?;
    let mut cols: Vec<usize> = (0..d + NUM_STRATA).collect();
    cols.shuffle(&mut rng);
    let (x_cols, g_cols) = cols.split_at(d);

    let covariates: Vec<Vec<f64>> = base
        .values
        .iter()
        .map(|r| x_cols.iter().map(|&j| r[j]).collect())
        .collect();
    let g0: Vec<[f64; NUM_STRATA]> = base
        .values
        .iter()
        .map(|r| std::array::from_fn(|k| r[g_cols[k]]))
        .collect();
    let logits = if cfg.recenter {
        let mut rrng = stream(seed, "prior/recenter");
        recenter_logits(
            &g0,
            &RecenterSpec {
                gamma: cfg.gamma,
                target: cfg.target,
            },
            &mut rrng,
        )?
    } else {
        g0
    };
    let strata_probs = logits
        .into_iter()
        .map(|mut g| {
            softmax_in_place(&mut g);
            StrataDist::with_tolerance(g, 1e-9)
        })
        .collect::<Result<Vec<_>>>()?;
    let instrument_propensity = instrument_propensity(&covariates, seed);
    let sate = strata_probs.iter().map(sate_of_strata).sum::<f64>() / cfg.n as f64;
    Ok(PriorDgp {
        n: cfg.n,
        d,
        covariates,
        instrument_propensity,
        strata_probs,
        sate,
        seed,
    })
}

/// Per-row strata access, separated so instrument sampling can be shown not to touch it.
pub trait StrataSource {
    fn strata(&self, row: usize) -> &StrataDist;
}

impl StrataSource for [StrataDist] {
    fn strata(&self, row: usize) -> &StrataDist {
        &self[row]
    }
}

/// `z_i ~ Bernoulli(propensity_i)`. Takes no strata argument by construction.
pub fn draw_instruments(propensity: &[f64], rng: &mut StreamRng) -> Vec<u8> {
    propensity
        .iter()
        .map(|&p| u8::from(rng.random_bool(p.clamp(0.0, 1.0))))
        .collect()
}

/// Draws strata and combines them with given instruments via consistency.
pub fn realize_observations(
    z: &[u8],
    strata: &(impl StrataSource + ?Sized),
    rng: &mut StreamRng,
) -> Vec<(u8, u8, StratumIndex)> {
    z.iter()
        .enumerate()
        .map(|(i, &zi)| {
            let s = StratumIndex::from_index(categorical(rng, strata.strata(i).probs())).expect("index < 16");
            let (t, y) = s.observe(zi);
            (t, y, s)
        })
        .collect()
}

/// Mean of exact per-row conditional bounds.
pub fn exact_label_bounds(strata: &[StrataDist]) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (0.0, 0.0);
    for q in strata {
        match conditional_bounds(&strata_to_condprobs(q)) {
            CondBounds::Valid(i) => {
                lo += i.lower();
                hi += i.upper();
            }
            CondBounds::Crossed { lower, upper, .. } => {
                return Err(Error::Numeric(format!(
                    "strata-induced probabilities reported crossed bounds [{lower}, {upper}]"
                )))
            }
        }
    }
    let n = strata.len() as f64;
    Ok((lo / n, hi / n))
}

pub fn sample_dataset(dgp: &PriorDgp, seed: u64) -> Result<IvDataset> {
    let z = draw_instruments(&dgp.instrument_propensity, &mut stream(seed, "prior/z"));
    let obs = realize_observations(&z, dgp.strata_probs.as_slice(), &mut stream(seed, "prior/strata"));
    let rows = dgp
        .covariates
        .iter()
        .zip(z.iter().zip(&obs))
        .map(|(x, (&z, &(t, y, _)))| Row {
            x: x.clone(),
            z,
            t,
            y: y as f64,
        })
        .collect();
    let (lower, upper) = exact_label_bounds(&dgp.strata_probs)?;
    let mut ds = IvDataset::new(dgp.d, rows, seed, "prior")?.with_labels(Labels {
        sate: dgp.sate,
        lower: Some(lower),
        upper: Some(upper),
    })?;
    ds.strata = Some(dgp.strata_probs.clone());
    Ok(ds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strata::effect_vector;

    #[test]
    fn base_table_shape_and_determinism() {
        let a = sample_base_table(11, 2048, 5).unwrap();
        assert_eq!(a.values.len(), 2048);
        assert!(a.values.iter().all(|r| r.len() == 5));
        assert_eq!(a, sample_base_table(11, 2048, 5).unwrap());
    }

    #[test]
    fn families_vary_across_seeds() {
        for slot in 0..4 {
            let mut seen = std::collections::HashSet::new();
            for seed in 0..100 {
                seen.insert(sample_base_table(seed, 4, 4).unwrap().families[slot]);
            }
            assert!(seen.len() >= 2);
        }
    }

    #[test]
    fn instrument_function_properties() {
        let f = InstrumentFn::zero(3);
        assert_eq!(f.propensity(&[1.0, -2.0, 5.0]), 0.5);
        let mono = InstrumentFn {
            linear: Linear {
                w: vec![1.5, 0.0],
                b: 0.0,
            },
            network: None,
            scale: 2.0,
        };
        let ps: Vec<f64> = (-5..=5).map(|k| mono.propensity(&[k as f64, 0.7])).collect();
        assert!(ps.windows(2).all(|w| w[0] <= w[1]));
        let base = sample_base_table(1, 500, 6).unwrap();
        for seed in 0..20 {
            let p = instrument_propensity(&base.values, seed);
            assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn recentering_identity_and_single_row() {
        let g0 = [[
            0.3, -1.0, 2.0, 0.0, 0.5, 0.1, -0.2, 1.1, 0.0, 0.0, 0.4, -0.7, 0.9, 0.2, -0.3, 0.6,
        ]];
        let mut p0 = g0[0];
        softmax_in_place(&mut p0);
        let mut rng = stream(0, "t");
        let out = recenter_logits(
            &g0,
            &RecenterSpec {
                gamma: 0.1,
                target: Some(p0),
            },
            &mut rng,
        )
        .unwrap();
        for (a, b) in out[0].iter().zip(g0[0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let target = StrataDist::from_weights([
            3.0, 1.0, 0.5, 0.5, 2.0, 1.0, 1.0, 0.2, 0.3, 0.1, 1.0, 1.0, 4.0, 0.9, 0.1, 0.4,
        ])
        .unwrap();
        let mut out = recenter_logits(
            &g0,
            &RecenterSpec {
                gamma: 0.1,
                target: Some(*target.probs()),
            },
            &mut rng,
        )
        .unwrap();
        softmax_in_place(&mut out[0]);
        for (a, b) in out[0].iter().zip(target.probs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn draw_dgp_replays_sate() {
        let cfg = PriorConfig {
            n: 300,
            ..Default::default()
        };
        let dgp = draw_dgp(5, &cfg).unwrap();
        let e = effect_vector();
        let replay: f64 = dgp
            .strata_probs
            .iter()
            .map(|q| q.probs().iter().zip(e).map(|(a, b)| a * b).sum::<f64>())
            .sum::<f64>()
            / 300.0;
        assert!((replay - dgp.sate).abs() < 1e-12);
        assert_ne!(dgp.strata_probs, draw_dgp(6, &cfg).unwrap().strata_probs);
    }

    #[test]
    fn point_mass_target_single_row() {
        let ef = StratumIndex::new(0, 1, 0, 1).unwrap();
        let cfg = PriorConfig {
            n: 1,
            target: Some(*StrataDist::point_mass(ef).probs()),
            ..Default::default()
        };
        assert!(draw_dgp(3, &cfg).unwrap().sate >= 0.99);
    }

    #[test]
    fn complier_effective_rows_satisfy_consistency() {
        let ce = StrataDist::point_mass(StratumIndex::new(0, 1, 0, 1).unwrap());
        let n = 200;
        let dgp = PriorDgp {
            n,
            d: 1,
            covariates: vec![vec![0.0]; n],
            instrument_propensity: vec![0.4; n],
            strata_probs: vec![ce; n],
            sate: 1.0,
            seed: 0,
        };
        let ds = sample_dataset(&dgp, 9).unwrap();
        assert!(ds.rows.iter().all(|r| r.t == r.z && r.y == r.t as f64));
        let l = ds.labels.unwrap();
        assert_eq!((l.lower, l.upper), (Some(1.0), Some(1.0)));
    }
}
