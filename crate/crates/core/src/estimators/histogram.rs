use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::Interval;

pub const DEFAULT_BINS: usize = 1024;

/// Cumulative-mass slack when locating quantiles.
const QUANTILE_TOL: f64 = 1e-12;

/// Discretized distribution over `[-1, 1]` with `K` uniform bins.
///
/// Backed by integer sample counts, so merging is exact and order-independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "HistogramRepr", try_from = "HistogramRepr")]
pub struct PosteriorHistogram {
    counts: Vec<u64>,
    n_samples: u64,
}

#[derive(Serialize, Deserialize)]
struct HistogramRepr {
    n_samples: u64,
    bin_mass: Vec<f64>,
}

impl From<PosteriorHistogram> for HistogramRepr {
    fn from(h: PosteriorHistogram) -> Self {
        HistogramRepr {
            n_samples: h.n_samples,
            bin_mass: h.bin_mass(),
        }
    }
}

impl TryFrom<HistogramRepr> for PosteriorHistogram {
    type Error = Error;
    fn try_from(r: HistogramRepr) -> Result<Self> {
        PosteriorHistogram::from_mass(&r.bin_mass, r.n_samples)
    }
}

impl PosteriorHistogram {
    pub fn empty(bins: usize) -> Self {
        assert!(bins > 0, "histogram needs at least one bin");
        Self {
            counts: vec![0; bins],
            n_samples: 0,
        }
    }

    pub fn from_samples(values: &[f64], bins: usize) -> Self {
        let mut h = Self::empty(bins);
        for &v in values {
            h.add(v);
        }
        h
    }

    /// Rebuilds counts from masses and the sample count.
    pub fn from_mass(mass: &[f64], n_samples: u64) -> Result<Self> {
        if mass.is_empty() {
            return Err(Error::Data("histogram has no bins".into()));
        }
        let total: f64 = mass.iter().sum();
        if mass.iter().any(|m| *m < 0.0 || !m.is_finite()) || (n_samples > 0 && (total - 1.0).abs() > 1e-9) {
            return Err(Error::InvalidProbabilities(format!("histogram mass sums to {total}")));
        }
        let counts: Vec<u64> = mass.iter().map(|m| (m * n_samples as f64).round() as u64).collect();
        if counts.iter().sum::<u64>() != n_samples {
            return Err(Error::Data("histogram masses are not multiples of 1/n_samples".into()));
        }
        Ok(Self { counts, n_samples })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    /// `⌊K(w + 1)/2⌋`, clipped to `[0, K − 1]`.
    pub fn bin_index(&self, w: f64) -> usize {
        let k = self.bins();
        let raw = (k as f64 * (w + 1.0) / 2.0).floor();
        if raw.is_nan() || raw < 0.0 {
            0
        } else {
            (raw as usize).min(k - 1)
        }
    }

    pub fn bin_center(&self, idx: usize) -> f64 {
        -1.0 + (idx as f64 + 0.5) * 2.0 / self.bins() as f64
    }

    pub fn add(&mut self, w: f64) {
        let i = self.bin_index(w);
        self.counts[i] += 1;
        self.n_samples += 1;
    }

    pub fn merge(&mut self, other: &PosteriorHistogram) -> Result<()> {
        if other.bins() != self.bins() {
            return Err(Error::Contract(
                "cannot merge histograms with different bin counts".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.n_samples += other.n_samples;
        Ok(())
    }

    pub fn bin_mass(&self) -> Vec<f64> {
        if self.n_samples == 0 {
            return vec![0.0; self.bins()];
        }
        self.counts.iter().map(|&c| c as f64 / self.n_samples as f64).collect()
    }

    /// Mean of bin centers under the bin masses.
    pub fn mean(&self) -> f64 {
        self.bin_mass()
            .iter()
            .enumerate()
            .map(|(i, m)| m * self.bin_center(i))
            .sum()
    }

    /// Smallest bin center whose cumulative mass reaches `q`.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut cum = 0.0;
        for (i, m) in self.bin_mass().iter().enumerate() {
            cum += m;
            if cum >= q - QUANTILE_TOL {
                return self.bin_center(i);
            }
        }
        self.bin_center(self.bins() - 1)
    }
}

/// `[Q_{α/2}, Q_{1−α/2}]` of the histogram.
pub fn quantile_interval(hist: &PosteriorHistogram, alpha: f64) -> Result<Interval> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if hist.n_samples() == 0 {
        return Err(Error::Data("quantiles of an empty histogram".into()));
    }
    Interval::new(hist.quantile(alpha / 2.0), hist.quantile(1.0 - alpha / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bin_index_convention() {
        let h = PosteriorHistogram::empty(4);
        assert_eq!(h.bin_index(-1.0), 0);
        assert_eq!(h.bin_index(-0.5), 1);
        assert_eq!(h.bin_index(0.0), 2);
        assert_eq!(h.bin_index(1.0), 3);
        assert_eq!(h.bin_index(7.0), 3);
        assert_eq!(h.bin_center(0), -0.75);
    }

    #[test]
    fn degenerate_histogram_interval() {
        let h = PosteriorHistogram::from_samples(&[0.3; 50], DEFAULT_BINS);
        let i = quantile_interval(&h, 0.01).unwrap();
        assert_eq!(i.width(), 0.0);
        assert!((i.lower() - 0.3).abs() <= 1.0 / DEFAULT_BINS as f64);
    }

    #[test]
    fn uniform_histogram_quantiles() {
        let k = DEFAULT_BINS;
        let h = PosteriorHistogram::from_mass(&vec![1.0 / k as f64; k], k as u64).unwrap();
        let i = quantile_interval(&h, 0.1).unwrap();
        let bw = 2.0 / k as f64;
        assert!((i.lower() + 0.9).abs() <= bw && (i.upper() - 0.9).abs() <= bw);
        assert!(quantile_interval(&h, 0.01).unwrap().contains_interval(&i));
    }

    #[test]
    fn serde_round_trip_and_merge() {
        let a = PosteriorHistogram::from_samples(&[-0.2, 0.1, 0.1, 0.9], 16);
        let b = PosteriorHistogram::from_samples(&[0.5, -1.0], 16);
        let json = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<PosteriorHistogram>(&json).unwrap(), a);
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        assert_eq!(ab, ba);
        assert!((ab.bin_mass().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
