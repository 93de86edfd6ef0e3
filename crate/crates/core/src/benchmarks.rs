//! Synthetic benchmark families with exact ground truth.
//!
//! * the binary-outcome benchmark: linear-softmax strata probabilities per
//!   row, exact per-row bounds as labels;
//! * the calibration families (Linear, Polynomial, DeepNonlinear) with a
//!   continuous outcome and a latent confounder `U`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{IvDataset, Labels, Row, YScale};
use crate::error::{Error, Result};
use crate::functions::{Linear, TanhMlp};
use crate::prior::{draw_instruments, exact_label_bounds, realize_observations};
use crate::rng::{stream, StreamRng};
use crate::sampling::{laplace, sigmoid, softmax_in_place, standard_normal};
use crate::strata::{sate_of_strata, StrataDist, NUM_STRATA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateFamily {
    /// `N(5, 1)`
    Normal,
    /// `Unif(-10, 5)`
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightFamily {
    /// `N(1, 2)`, variance 2
    Normal,
    /// `Unif(-2, 2)`
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    Normal,
    Laplace,
}

impl CovariateFamily {
    fn draw(self, rng: &mut StreamRng) -> f64 {
        match self {
            Self::Normal => 5.0 + standard_normal(rng),
            Self::Uniform => rng.random_range(-10.0..5.0),
        }
    }
}

impl WeightFamily {
    fn draw(self, rng: &mut StreamRng) -> f64 {
        match self {
            Self::Normal => 1.0 + 2f64.sqrt() * standard_normal(rng),
            Self::Uniform => rng.random_range(-2.0..2.0),
        }
    }
}

impl NoiseFamily {
    fn draw(self, rng: &mut StreamRng) -> f64 {
        match self {
            Self::Normal => standard_normal(rng),
            Self::Laplace => laplace(rng, 0.0, 1.0),
        }
    }
}

fn pick<T: Copy>(rng: &mut StreamRng, a: T, b: T) -> T {
    if rng.random_bool(0.5) {
        a
    } else {
        b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinaryBenchConfig {
    pub n: usize,
    /// Fixed dimension; drawn uniformly from `5..=10` when absent.
    #[serde(default)]
    pub d: Option<usize>,
    pub seed: u64,
}

impl Default for BinaryBenchConfig {
    fn default() -> Self {
        Self {
            n: 2048,
            d: None,
            seed: 0,
        }
    }
}

/// Family choices realized by one benchmark draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryBenchDraw {
    pub d: usize,
    pub covariate_families: Vec<CovariateFamily>,
    pub instrument_weights: WeightFamily,
    pub instrument_noise: NoiseFamily,
    pub strata_weights: WeightFamily,
    pub strata_noise: NoiseFamily,
}

pub fn gen_binary_benchmark(cfg: &BinaryBenchConfig) -> Result<(IvDataset, BinaryBenchDraw)> {
    if cfg.n == 0 {
        return Err(Error::Config("binary benchmark needs n >= 1".into()));
    }
    let mut rng = stream(cfg.seed, "binary/design");
    let d = cfg.d.unwrap_or_else(|| rng.random_range(5..=10));
    if d == 0 {
        return Err(Error::Config("binary benchmark needs d >= 1".into()));
    }
    let draw = BinaryBenchDraw {
        d,
        covariate_families: (0..d)
            .map(|_| pick(&mut rng, CovariateFamily::Normal, CovariateFamily::Uniform))
            .collect(),
        instrument_weights: pick(&mut rng, WeightFamily::Normal, WeightFamily::Uniform),
        instrument_noise: pick(&mut rng, NoiseFamily::Normal, NoiseFamily::Laplace),
        strata_weights: pick(&mut rng, WeightFamily::Normal, WeightFamily::Uniform),
        strata_noise: pick(&mut rng, NoiseFamily::Normal, NoiseFamily::Laplace),
    };

    let mut xr = stream(cfg.seed, "binary/covariates");
    let x: Vec<Vec<f64>> = (0..cfg.n)
        .map(|_| draw.covariate_families.iter().map(|f| f.draw(&mut xr)).collect())
        .collect();

    let mut ir = stream(cfg.seed, "binary/instrument");
    let wz: Vec<f64> = (0..d).map(|_| draw.instrument_weights.draw(&mut ir)).collect();
    let mut lz: Vec<f64> = x
        .iter()
        .map(|xi| xi.iter().zip(&wz).map(|(a, b)| a * b).sum::<f64>() + draw.instrument_noise.draw(&mut ir))
        .collect();
    let mean = lz.iter().sum::<f64>() / cfg.n as f64;
    let sd = if cfg.n > 1 {
        (lz.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (cfg.n - 1) as f64).sqrt()
    } else {
        0.0
    };
    for v in &mut lz {
        *v = if sd > 0.0 { (*v - mean) / sd } else { 0.0 };
    }
    let propensity: Vec<f64> = lz.iter().map(|&v| sigmoid(v)).collect();

    let mut sr = stream(cfg.seed, "binary/strata-model");
    let w: Vec<[f64; NUM_STRATA]> = (0..d)
        .map(|_| std::array::from_fn(|_| draw.strata_weights.draw(&mut sr)))
        .collect();
    let strata = x
        .iter()
        .map(|xi| {
            let mut l: [f64; NUM_STRATA] = std::array::from_fn(|k| {
                xi.iter().zip(&w).map(|(xv, wr)| xv * wr[k]).sum::<f64>() + draw.strata_noise.draw(&mut sr)
            });
            softmax_in_place(&mut l);
            StrataDist::with_tolerance(l, 1e-9)
        })
        .collect::<Result<Vec<_>>>()?;

    let z = draw_instruments(&propensity, &mut stream(cfg.seed, "binary/z"));
    let obs = realize_observations(&z, strata.as_slice(), &mut stream(cfg.seed, "binary/observe"));
    let rows = x
        .into_iter()
        .zip(z.iter().zip(&obs))
        .map(|(x, (&z, &(t, y, _)))| Row { x, z, t, y: y as f64 })
        .collect();
    let sate = strata.iter().map(sate_of_strata).sum::<f64>() / cfg.n as f64;
    let (lower, upper) = exact_label_bounds(&strata)?;
    let mut ds = IvDataset::new(d, rows, cfg.seed, "binary-benchmark")?.with_labels(Labels {
        sate,
        lower: Some(lower),
        upper: Some(upper),
    })?;
    ds.strata = Some(strata);
    Ok((ds, draw))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpFamily {
    Linear,
    #[serde(alias = "poly")]
    Polynomial,
    #[serde(alias = "deepnl")]
    DeepNonlinear,
}

impl std::str::FromStr for DgpFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "poly" | "polynomial" => Ok(Self::Polynomial),
            "deepnl" | "deep_nonlinear" | "deep-nonlinear" => Ok(Self::DeepNonlinear),
            other => Err(Error::Config(format!("unknown DGP family '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibDgpConfig {
    pub family: DgpFamily,
    pub n: usize,
    pub d: usize,
    pub a: f64,
    pub gamma_t: f64,
    pub gamma_y: f64,
    pub sigma_y: f64,
    pub clip: (f64, f64),
    pub seed: u64,
}

impl CalibDgpConfig {
    pub fn new(family: DgpFamily, n: usize, d: usize, seed: u64) -> Self {
        Self {
            family,
            n,
            d,
            a: 2.0,
            gamma_t: 1.0,
            gamma_y: 1.0,
            sigma_y: 0.5,
            clip: (0.05, 0.95),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.clip;
        if !(0.0 < lo && lo < 0.5 && 0.5 < hi && hi < 1.0) {
            return Err(Error::Config(format!(
                "propensity clip ({lo}, {hi}) must satisfy 0 < lo < 0.5 < hi < 1"
            )));
        }
        if self.n == 0 || self.d == 0 {
            return Err(Error::Config("calibration DGP needs n >= 1 and d >= 1".into()));
        }
        Ok(())
    }
}

/// The link functions `(h_T, μ_0, μ_1)` of a calibration family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FamilyLinks {
    Linear {
        w_t: Linear,
        w_y0: Linear,
        beta: f64,
    },
    Polynomial {
        w_t: Linear,
        quad_t: f64,
        w_y: Linear,
        beta: f64,
        kappa: f64,
    },
    DeepNonlinear {
        h_t: TanhMlp,
        mu0: TanhMlp,
        mu1: TanhMlp,
    },
}

/// `E[X²]` for `X ~ Unif(-2, 2)`.
pub const UNIF2_SECOND_MOMENT: f64 = 4.0 / 3.0;

fn rademacher(rng: &mut StreamRng) -> f64 {
    if rng.random_bool(0.5) {
        1.0
    } else {
        -1.0
    }
}

pub fn family_links(family: DgpFamily, d: usize, seed: u64) -> FamilyLinks {
    let mut rng = stream(seed, "calib/links");
    let sd = 1.0 / (d as f64).sqrt();
    match family {
        DgpFamily::Linear => {
            let w_t = Linear::gaussian(&mut rng, d, sd);
            let w_y0 = Linear::gaussian(&mut rng, d, sd);
            let beta = rng.random_range(0.5..2.0) * rademacher(&mut rng);
            FamilyLinks::Linear { w_t, w_y0, beta }
        }
        DgpFamily::Polynomial => {
            let w_t = Linear::gaussian(&mut rng, d, sd);
            let quad_t = sd * standard_normal(&mut rng);
            let w_y = Linear::gaussian(&mut rng, d, sd);
            let beta = rng.random_range(0.5..1.5) * rademacher(&mut rng);
            let kappa = rng.random_range(0.3..0.8) * rademacher(&mut rng);
            FamilyLinks::Polynomial {
                w_t,
                quad_t,
                w_y,
                beta,
                kappa,
            }
        }
        DgpFamily::DeepNonlinear => FamilyLinks::DeepNonlinear {
            h_t: TanhMlp::random(&mut rng, d, 16),
            mu0: TanhMlp::random(&mut rng, d, 16),
            mu1: TanhMlp::random(&mut rng, d, 16),
        },
    }
}

impl FamilyLinks {
    pub fn h_t(&self, x: &[f64]) -> f64 {
        match self {
            Self::Linear { w_t, .. } => w_t.eval(x),
            Self::Polynomial { w_t, quad_t, .. } => w_t.eval(x) + quad_t * (x[0] * x[0] - UNIF2_SECOND_MOMENT),
            Self::DeepNonlinear { h_t, .. } => h_t.eval(x),
        }
    }

    pub fn mu(&self, t: u8, x: &[f64]) -> f64 {
        match self {
            Self::Linear { w_y0, beta, .. } => w_y0.eval(x) + t as f64 * beta,
            Self::Polynomial { w_y, beta, kappa, .. } => {
                let mu0 = w_y.eval(x).sin();
                if t == 1 {
                    mu0 + beta + kappa * (x[0] * x[0] - UNIF2_SECOND_MOMENT)
                } else {
                    mu0
                }
            }
            Self::DeepNonlinear { mu0, mu1, .. } => {
                if t == 1 {
                    mu1.eval(x)
                } else {
                    mu0.eval(x)
                }
            }
        }
    }

    pub fn effect(&self, x: &[f64]) -> f64 {
        self.mu(1, x) - self.mu(0, x)
    }
}

/// One simulated unit, kept for replay checks.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibUnit {
    pub x: Vec<f64>,
    pub z: u8,
    pub u: f64,
    pub eta: f64,
    pub p_t: f64,
    pub t: u8,
    pub y_raw: f64,
}

/// `Z̃ = (Z − 0.5)/√0.25`.
pub fn standardized_instrument(z: u8) -> f64 {
    (z as f64 - 0.5) / 0.25f64.sqrt()
}

/// `Y = μ_T(x) + γ_Y U + σ_Y η`. No instrument argument.
pub fn calib_outcome(links: &FamilyLinks, cfg: &CalibDgpConfig, x: &[f64], t: u8, u: f64, eta: f64) -> f64 {
    links.mu(t, x) + cfg.gamma_y * u + cfg.sigma_y * eta
}

pub fn calib_treatment_propensity(links: &FamilyLinks, cfg: &CalibDgpConfig, x: &[f64], z: u8, u: f64) -> f64 {
    let (lo, hi) = cfg.clip;
    sigmoid(cfg.a * standardized_instrument(z) + links.h_t(x) + cfg.gamma_t * u).clamp(lo, hi)
}

pub fn simulate_calib_units(cfg: &CalibDgpConfig, links: &FamilyLinks) -> Vec<CalibUnit> {
    let mut rng = stream(cfg.seed, "calib/units");
    (0..cfg.n)
        .map(|_| {
            let x: Vec<f64> = (0..cfg.d).map(|_| rng.random_range(-2.0..2.0)).collect();
            let z = u8::from(rng.random_bool(0.5));
            let u = standard_normal(&mut rng);
            let eta = standard_normal(&mut rng);
            let p_t = calib_treatment_propensity(links, cfg, &x, z, u);
            let t = u8::from(rng.random::<f64>() < p_t);
            let y_raw = calib_outcome(links, cfg, &x, t, u, eta);
            CalibUnit {
                x,
                z,
                u,
                eta,
                p_t,
                t,
                y_raw,
            }
        })
        .collect()
}

/// A calibration dataset. `y` is min-max rescaled to `[0, 1]`; the SATE label is
/// on the same unit scale (`raw SATE / (max − min)`).
pub fn gen_calib_dgp(cfg: &CalibDgpConfig) -> Result<IvDataset> {
    cfg.validate()?;
    let links = family_links(cfg.family, cfg.d, cfg.seed);
    let units = simulate_calib_units(cfg, &links);
    let sate_raw = units.iter().map(|u| links.effect(&u.x)).sum::<f64>() / cfg.n as f64;
    let rows = units
        .into_iter()
        .map(|u| Row {
            x: u.x,
            z: u.z,
            t: u.t,
            y: u.y_raw,
        })
        .collect();
    let ds = IvDataset::from_raw_outcomes(cfg.d, rows, cfg.seed, format!("calib-{:?}", cfg.family).to_lowercase())?;
    let sate = unit_scale_effect(sate_raw, &ds.y_scale);
    ds.with_labels(Labels {
        sate,
        lower: None,
        upper: None,
    })
}

/// Maps an effect on the raw outcome scale to the unit scale.
pub fn unit_scale_effect(raw: f64, scale: &YScale) -> f64 {
    if scale.range() == 0.0 {
        0.0
    } else {
        raw / scale.range()
    }
}
