//! Exact posterior means on tiny datasets by enumerating latent strata assignments.
//!
//! Under a symmetric Dirichlet(α) prior and observations `o_1..o_m`, the
//! posterior of `q` is a mixture over assignments `s_j ∈ S(o_j)` of
//! `Dir(α + N)`, weighted by `∏_s (α)_{N_s}`, with `(a)_k` the rising factorial.

fn compatible(z: u8, t: u8, y: u8) -> Vec<usize> {
    (0..16)
        .filter(|&s| {
            let tz = if z == 0 { (s >> 3) & 1 } else { (s >> 2) & 1 };
            let yt = if tz == 0 { (s >> 1) & 1 } else { s & 1 };
            tz as u8 == t && yt as u8 == y
        })
        .collect()
}

fn effect(s: usize) -> f64 {
    (s & 1) as f64 - ((s >> 1) & 1) as f64
}

fn rising(a: f64, k: usize) -> f64 {
    (0..k).map(|i| a + i as f64).product()
}

/// Exact `E[sate(q) | data]` for one cell.
pub fn exact_cell_mean(obs: &[(u8, u8, u8)], alpha: f64) -> f64 {
    let sets: Vec<Vec<usize>> = obs.iter().map(|&(z, t, y)| compatible(z, t, y)).collect();
    let m = obs.len();
    let (mut num, mut den) = (0.0, 0.0);
    let mut idx = vec![0usize; m];
    loop {
        let mut counts = [0usize; 16];
        for (j, &k) in idx.iter().enumerate() {
            counts[sets[j][k]] += 1;
        }
        let w: f64 = counts.iter().map(|&c| rising(alpha, c)).product();
        let mean: f64 =
            (0..16).map(|s| effect(s) * (alpha + counts[s] as f64)).sum::<f64>() / (16.0 * alpha + m as f64);
        num += w * mean;
        den += w;
        let mut pos = 0;
        loop {
            if pos == m {
                return num / den;
            }
            idx[pos] += 1;
            if idx[pos] < sets[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}
