//! Small sampling and link-function helpers shared by the generators and the sampler.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// In-place softmax of `logits`.
pub fn softmax_in_place(logits: &mut [f64]) {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    for v in logits.iter_mut() {
        *v /= s;
    }
}

pub fn softmax<const N: usize>(mut logits: [f64; N]) -> [f64; N] {
    softmax_in_place(&mut logits);
    logits
}

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Laplace(loc, scale) by inversion.
pub fn laplace<R: Rng + ?Sized>(rng: &mut R, loc: f64, scale: f64) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    loc - scale * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// `log G` for `G ~ Gamma(shape, 1)`.
///
/// Small shapes use `G(a) = G(a + 1)·U^(1/a)` so the draw never underflows to zero.
pub fn log_gamma_variate<R: Rng + ?Sized>(rng: &mut R, shape: f64) -> f64 {
    assert!(
        shape > 0.0 && shape.is_finite(),
        "gamma shape must be positive, got {shape}"
    );
    if shape >= 1.0 {
        let g = Gamma::new(shape, 1.0).expect("valid shape").sample(rng);
        return g.ln();
    }
    let g = Gamma::new(shape + 1.0, 1.0).expect("valid shape").sample(rng);
    let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    g.ln() + u.ln() / shape
}

/// Dirichlet draw computed in log space.
pub fn dirichlet<R: Rng + ?Sized, const N: usize>(rng: &mut R, alpha: &[f64; N]) -> [f64; N] {
    let mut out = [0.0; N];
    for (o, &a) in out.iter_mut().zip(alpha) {
        *o = log_gamma_variate(rng, a);
    }
    softmax_in_place(&mut out);
    out
}

/// Draws an index with probability proportional to `weights`.
pub fn categorical<R: Rng + ?Sized>(rng: &mut R, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // Floating-point leftovers land on the last positive weight.
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

/// Multinomial counts of `n` draws over `weights` (sequential binomials).
pub fn multinomial<R: Rng + ?Sized, const N: usize>(rng: &mut R, n: u64, weights: &[f64; N]) -> [u64; N] {
    let mut out = [0u64; N];
    let mut left = n;
    let mut mass: f64 = weights.iter().sum();
    for i in 0..N {
        if left == 0 {
            break;
        }
        if i == N - 1 || mass <= 0.0 {
            out[i] = left;
            break;
        }
        let p = (weights[i] / mass).clamp(0.0, 1.0);
        let k = rand_distr::Binomial::new(left, p).expect("valid binomial").sample(rng);
        out[i] = k;
        left -= k;
        mass -= weights[i];
    }
    out
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Pearson correlation; zero when either side is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    sab / (saa * sbb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
        assert!((logit(sigmoid(1.3)) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn tiny_concentration_dirichlet_is_finite() {
        let mut rng = stream(3, "dir");
        for _ in 0..1000 {
            let q = dirichlet(&mut rng, &[0.01; 16]);
            let s: f64 = q.iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(q.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }

    #[test]
    fn dirichlet_mean() {
        let mut rng = stream(4, "dir");
        let alpha = [0.5, 1.0, 2.5];
        let mut acc = [0.0; 3];
        let n = 40_000;
        for _ in 0..n {
            let q = dirichlet(&mut rng, &alpha);
            for i in 0..3 {
                acc[i] += q[i] / n as f64;
            }
        }
        for i in 0..3 {
            assert!((acc[i] - alpha[i] / 4.0).abs() < 0.01, "{acc:?}");
        }
    }

    #[test]
    fn multinomial_preserves_total() {
        let mut rng = stream(5, "mn");
        let c = multinomial(&mut rng, 1000, &[0.1, 0.0, 0.6, 0.3]);
        assert_eq!(c.iter().sum::<u64>(), 1000);
        assert_eq!(c[1], 0);
    }

    #[test]
    fn laplace_moments() {
        let mut rng = stream(6, "lap");
        let xs: Vec<f64> = (0..50_000).map(|_| laplace(&mut rng, 0.0, 1.0)).collect();
        assert!(mean(&xs).abs() < 0.03);
        assert!((sample_sd(&xs) - 2f64.sqrt()).abs() < 0.05);
    }

    #[test]
    fn pearson_identity() {
        let a = [0.0, 1.0, 1.0, 0.0, 1.0];
        assert!((pearson(&a, &a) - 1.0).abs() < 1e-12);
        assert_eq!(pearson(&a, &[1.0; 5]), 0.0);
    }
}
