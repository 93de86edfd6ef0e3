//! Seeded random function families.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sampling::standard_normal;

/// `w·x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: Vec<f64>,
    pub b: f64,
}

impl Linear {
    /// Weights i.i.d. `N(0, sd²)`, zero bias.
    pub fn gaussian<R: Rng + ?Sized>(rng: &mut R, dim: usize, sd: f64) -> Self {
        Self {
            w: (0..dim).map(|_| sd * standard_normal(rng)).collect(),
            b: 0.0,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() + self.b
    }
}

/// Two-layer network `w2·tanh(W1 x + b1) + b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TanhMlp {
    pub hidden: Vec<Linear>,
    pub out: Linear,
}

impl TanhMlp {
    /// Gaussian weights with variance `1/fan_in` in both layers.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, input: usize, width: usize) -> Self {
        let sd_in = 1.0 / (input.max(1) as f64).sqrt();
        let hidden = (0..width)
            .map(|_| {
                let mut l = Linear::gaussian(rng, input, sd_in);
                l.b = standard_normal(rng) * 0.5;
                l
            })
            .collect();
        let out = Linear::gaussian(rng, width, 1.0 / (width as f64).sqrt());
        Self { hidden, out }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut h = Vec::with_capacity(self.hidden.len());
        self.hidden.iter().for_each(|l| h.push(l.eval(x).tanh()));
        self.out.eval(&h)
    }
}
