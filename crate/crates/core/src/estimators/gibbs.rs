//! Posterior over the SATE by conjugate data augmentation.
//!
//! Every observed `(z, t, y)` is compatible with four strata. A sweep draws the
//! latent strata counts of each observed slot, then `q ~ Dir(α + counts)`, per
//! stratification cell. The likelihood depends on `q` only through its
//! observational margins, so sweeps optionally add hit-and-run moves along the
//! null space of the margin map; those keep the likelihood fixed and mix the
//! otherwise slow direction.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SVector};
use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::IvDataset;
use crate::error::{Error, Result};
use crate::estimators::condprob::{cell_counts, Stratification};
use crate::estimators::histogram::{PosteriorHistogram, DEFAULT_BINS};
use crate::lp::build_lp;
use crate::rng::{indexed_stream, StreamRng};
use crate::sampling::{dirichlet, multinomial, standard_normal};
use crate::strata::{effect_vector, CondProbs, StratumIndex, NUM_STRATA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub prior_concentration: f64,
    pub burn_in: usize,
    pub n_samples: usize,
    pub thinning: usize,
    /// Null-space moves per cell per sweep.
    pub fiber_moves: usize,
    pub bins: usize,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            prior_concentration: 1.0,
            burn_in: 1000,
            n_samples: 4000,
            thinning: 1,
            fiber_moves: 2,
            bins: DEFAULT_BINS,
            seed: 0,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.prior_concentration > 0.0 && self.prior_concentration.is_finite()) {
            return Err(Error::Config("prior_concentration must be positive".into()));
        }
        if self.n_samples == 0 || self.thinning == 0 || self.bins == 0 {
            return Err(Error::Config("n_samples, thinning and bins must be at least 1".into()));
        }
        Ok(())
    }
}

type Vec16 = SVector<f64, NUM_STRATA>;

/// The four strata compatible with each observed slot.
fn compatible() -> &'static [[usize; 4]; 8] {
    static TABLE: OnceLock<[[usize; 4]; 8]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = [[0usize; 4]; 8];
        let mut fill = [0usize; 8];
        for s in StratumIndex::all() {
            for z in 0..2 {
                let (t, y) = s.observe(z);
                let slot = CondProbs::slot(y, t, z);
                table[slot][fill[slot]] = s.index();
                fill[slot] += 1;
            }
        }
        table
    })
}

/// Orthogonal projector onto the null space of the margin map (rank 9).
fn null_projector() -> &'static DMatrix<f64> {
    static P: OnceLock<DMatrix<f64>> = OnceLock::new();
    P.get_or_init(|| {
        let lp = build_lp(&CondProbs::new([0.25; 8]).expect("uniform margins"));
        let a = DMatrix::from_fn(8, NUM_STRATA, |i, j| lp.eq_constraints[i][j]);
        let svd = a.svd(false, true);
        let vt = svd.v_t.expect("requested V^T");
        let mut proj = DMatrix::<f64>::identity(NUM_STRATA, NUM_STRATA);
        for (i, sv) in svd.singular_values.iter().enumerate() {
            if *sv > 1e-9 {
                let v = vt.row(i).transpose();
                proj -= &v * v.transpose();
            }
        }
        proj
    })
}

/// One stratification cell: slot counts and the current strata draw.
#[derive(Debug, Clone)]
struct CellChain {
    counts: [u64; 8],
    q: Vec16,
}

fn sweep_cell(cell: &mut CellChain, alpha: f64, fiber_moves: usize, rng: &mut StreamRng) {
    let table = compatible();
    let mut latent = [alpha; NUM_STRATA];
    for (slot, &m) in cell.counts.iter().enumerate() {
        if m == 0 {
            continue;
        }
        let strata = table[slot];
        let w = strata.map(|s| cell.q[s]);
        let draw = if w.iter().sum::<f64>() > 0.0 {
            multinomial(rng, m, &w)
        } else {
            multinomial(rng, m, &[1.0; 4])
        };
        for (s, k) in strata.iter().zip(draw) {
            latent[*s] += k as f64;
        }
    }
    cell.q = Vec16::from(dirichlet(rng, &latent));
    for _ in 0..fiber_moves {
        fiber_move(&mut cell.q, alpha, rng);
    }
}

/// Hit-and-run along a random null-space direction, targeting the Dirichlet
/// prior density restricted to the fiber.
fn fiber_move(q: &mut Vec16, alpha: f64, rng: &mut StreamRng) {
    let g = Vec16::from_fn(|_, _| standard_normal(rng));
    let proj = null_projector();
    let dir = Vec16::from_fn(|i, _| (0..NUM_STRATA).map(|j| proj[(i, j)] * g[j]).sum());
    let norm = dir.norm();
    if norm < 1e-12 {
        return;
    }
    let dir = dir / norm;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..NUM_STRATA {
        if dir[i] > 1e-15 {
            lo = lo.max(-q[i] / dir[i]);
        } else if dir[i] < -1e-15 {
            hi = hi.min(-q[i] / dir[i]);
        }
    }
    if !(hi > lo) {
        return;
    }
    let lambda = if (alpha - 1.0).abs() < 1e-15 {
        rng.random_range(lo..hi)
    } else {
        slice_along(q, &dir, lo, hi, alpha, rng)
    };
    for i in 0..NUM_STRATA {
        q[i] = (q[i] + lambda * dir[i]).max(0.0);
    }
    let total = q.sum();
    *q /= total;
}

/// Shrinking slice sampler on `[lo, hi]` for `(α − 1) Σ log(q + λ d)`.
fn slice_along(q: &Vec16, dir: &Vec16, lo: f64, hi: f64, alpha: f64, rng: &mut StreamRng) -> f64 {
    let logf = |l: f64| -> f64 {
        (alpha - 1.0)
            * (0..NUM_STRATA)
                .map(|i| (q[i] + l * dir[i]).max(1e-300).ln())
                .sum::<f64>()
    };
    let level = logf(0.0) - Distribution::<f64>::sample(&Exp1, rng);
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let l = rng.random_range(a..b);
        if logf(l) >= level {
            return l;
        }
        if l < 0.0 {
            a = l;
        } else {
            b = l;
        }
        if b - a < 1e-15 {
            break;
        }
    }
    0.0
}

/// Runs one chain and returns the post-burn-in, thinned SATE draws.
pub fn gibbs_samples(dataset: &IvDataset, cfg: &GibbsConfig, stratification: &Stratification) -> Result<Vec<f64>> {
    gibbs_samples_indexed(dataset, cfg, stratification, 0)
}

fn gibbs_samples_indexed(
    dataset: &IvDataset,
    cfg: &GibbsConfig,
    stratification: &Stratification,
    chain: u64,
) -> Result<Vec<f64>> {
    cfg.validate()?;
    stratification.validate(dataset.d)?;
    if !dataset.is_binary_outcome() {
        return Err(Error::NonBinaryOutcome);
    }
    let partition = stratification.partition(&dataset.rows);
    let mut cells = Vec::with_capacity(partition.len().max(1));
    let mut weights = Vec::with_capacity(cells.capacity());
    for idx in partition.values() {
        cells.push(CellChain {
            counts: cell_counts(idx.iter().map(|&i| &dataset.rows[i]))?,
            q: Vec16::repeat(1.0 / NUM_STRATA as f64),
        });
        weights.push(idx.len() as f64 / dataset.n() as f64);
    }
    if cells.is_empty() {
        cells.push(CellChain {
            counts: [0; 8],
            q: Vec16::repeat(1.0 / NUM_STRATA as f64),
        });
        weights.push(1.0);
    }
    let effects = Vec16::from(effect_vector());
    let mut rng = indexed_stream(cfg.seed, "gibbs/chain", chain);
    let total = cfg.burn_in + cfg.n_samples * cfg.thinning;
    let mut out = Vec::with_capacity(cfg.n_samples);
    for sweep in 0..total {
        for cell in &mut cells {
            sweep_cell(cell, cfg.prior_concentration, cfg.fiber_moves, &mut rng);
        }
        if sweep >= cfg.burn_in && (sweep - cfg.burn_in).is_multiple_of(cfg.thinning) {
            out.push(cells.iter().zip(&weights).map(|(c, w)| w * c.q.dot(&effects)).sum());
        }
    }
    Ok(out)
}

pub fn gibbs_posterior(
    dataset: &IvDataset,
    cfg: &GibbsConfig,
    stratification: &Stratification,
) -> Result<PosteriorHistogram> {
    let samples = gibbs_samples(dataset, cfg, stratification)?;
    Ok(PosteriorHistogram::from_samples(&samples, cfg.bins))
}

/// Posterior for an outcome in `[0, 1]` via a threshold grid.
///
/// One chain per threshold on `1{y >= s}`. The per-threshold draws are
/// combined comonotonically: the `k`-th order statistics are averaged. Binary
/// outcomes run a single chain.
pub fn gibbs_posterior_thresholded(
    dataset: &IvDataset,
    cfg: &GibbsConfig,
    stratification: &Stratification,
    thresholds: usize,
) -> Result<PosteriorHistogram> {
    if dataset.is_binary_outcome() {
        return gibbs_posterior(dataset, cfg, stratification);
    }
    if thresholds < 2 {
        return Err(Error::Config("threshold grid needs J >= 2".into()));
    }
    let grid = crate::bounds::threshold_grid(thresholds);
    let chains: Vec<Vec<f64>> = grid
        .par_iter()
        .enumerate()
        .map(|(j, &s)| {
            let mut draws = gibbs_samples_indexed(&dataset.binarized(s), cfg, stratification, j as u64)?;
            draws.sort_by(f64::total_cmp);
            Ok(draws)
        })
        .collect::<Result<_>>()?;
    let j = chains.len() as f64;
    let combined: Vec<f64> = (0..cfg.n_samples)
        .map(|k| chains.iter().map(|c| c[k]).sum::<f64>() / j)
        .collect();
    Ok(PosteriorHistogram::from_samples(&combined, cfg.bins))
}

/// Independent chains on separate streams, merged.
pub fn gibbs_posterior_chains(
    dataset: &IvDataset,
    cfg: &GibbsConfig,
    stratification: &Stratification,
    chains: usize,
) -> Result<PosteriorHistogram> {
    let hists: Vec<PosteriorHistogram> = (0..chains.max(1) as u64)
        .into_par_iter()
        .map(|c| {
            gibbs_samples_indexed(dataset, cfg, stratification, c)
                .map(|s| PosteriorHistogram::from_samples(&s, cfg.bins))
        })
        .collect::<Result<_>>()?;
    let mut it = hists.into_iter();
    let mut acc = it.next().expect("at least one chain");
    for h in it {
        acc.merge(&h)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bounds::conditional_bounds;
    use crate::dataset::Row;
    use crate::estimators::histogram::quantile_interval;
    use crate::prior::realize_observations;
    use crate::rng::stream;
    use crate::strata::{strata_to_condprobs, StrataDist};

    fn sample(q: StrataDist, n: usize, seed: u64) -> IvDataset {
        let mut rng = stream(seed, "test/gibbs");
        let z: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let obs = realize_observations(&z, &vec![q; n][..], &mut rng);
        let rows = obs
            .iter()
            .zip(&z)
            .map(|(&(t, y, _), &z)| Row {
                x: vec![],
                z,
                t,
                y: f64::from(y),
            })
            .collect();
        IvDataset::new(0, rows, seed, "test").unwrap()
    }

    #[test]
    fn projector_kills_margins() {
        let p = null_projector();
        assert!((p.trace() - 9.0).abs() < 1e-9);
        let lp = build_lp(&CondProbs::new([0.25; 8]).unwrap());
        for row in lp.eq_constraints {
            for j in 0..NUM_STRATA {
                let v: f64 = (0..NUM_STRATA).map(|i| row[i] * p[(i, j)]).sum();
                assert!(v.abs() < 1e-9);
            }
        }
    }

    #[test]
    fn fiber_move_preserves_margins() {
        let mut rng = stream(4, "test/fiber");
        let mut q = Vec16::from(dirichlet(&mut rng, &[1.0; NUM_STRATA]));
        let before = strata_to_condprobs(&StrataDist::new(*q.as_ref()).unwrap());
        for _ in 0..50 {
            fiber_move(&mut q, 0.7, &mut rng);
        }
        let after = strata_to_condprobs(&StrataDist::with_tolerance(*q.as_ref(), 1e-9).unwrap());
        for k in 0..8 {
            assert!((before.as_array()[k] - after.as_array()[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn prior_pushforward_is_centered() {
        let empty = IvDataset::new(0, vec![], 0, "empty").unwrap();
        let cfg = GibbsConfig {
            n_samples: 20_000,
            burn_in: 10,
            seed: 3,
            ..Default::default()
        };
        let h = gibbs_posterior(&empty, &cfg, &Stratification::Pooled).unwrap();
        assert!(h.mean().abs() < 0.02);
        let i = quantile_interval(&h, 0.1).unwrap();
        assert!(i.lower() < -0.2 && i.upper() > 0.2);
    }

    #[test]
    fn deterministic_in_seed() {
        let data = sample(StrataDist::uniform(), 200, 5);
        let cfg = GibbsConfig {
            n_samples: 300,
            burn_in: 50,
            seed: 9,
            ..Default::default()
        };
        let a = gibbs_posterior(&data, &cfg, &Stratification::Pooled).unwrap();
        let b = gibbs_posterior(&data, &cfg, &Stratification::Pooled).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn complier_effective_concentrates() {
        let q = StrataDist::point_mass(StratumIndex::new(0, 1, 0, 1).unwrap());
        let cfg = GibbsConfig {
            seed: 1,
            ..Default::default()
        };
        let h = gibbs_posterior(&sample(q, 4000, 6), &cfg, &Stratification::Pooled).unwrap();
        let i = quantile_interval(&h, 0.01).unwrap();
        assert!(i.width() <= 0.1 && i.upper() > 0.95, "{i}");
    }

    #[test]
    fn uniform_strata_contains_truth() {
        let data = sample(StrataDist::uniform(), 4000, 7);
        let cfg = GibbsConfig {
            seed: 2,
            ..Default::default()
        };
        let i = quantile_interval(&gibbs_posterior(&data, &cfg, &Stratification::Pooled).unwrap(), 0.01).unwrap();
        let (lo, hi) = conditional_bounds(&strata_to_condprobs(&StrataDist::uniform())).endpoints();
        assert!(i.contains(0.0));
        assert!(i.lower() >= lo - 0.05 && i.upper() <= hi + 0.05, "{i}");
    }
}
