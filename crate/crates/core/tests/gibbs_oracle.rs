//! Gibbs chains against exhaustively enumerated posteriors.

mod common;

use common::exact_cell_mean;
use ivbounds::dataset::{IvDataset, Row};
use ivbounds::estimators::{gibbs_posterior, gibbs_samples, GibbsConfig, Stratification};

fn toy(x: &[f64], obs: &[(u8, u8, u8)]) -> IvDataset {
    let rows = obs
        .iter()
        .zip(x)
        .map(|(&(z, t, y), &x)| Row {
            x: vec![x],
            z,
            t,
            y: f64::from(y),
        })
        .collect();
    IvDataset::new(1, rows, 0, "toy").unwrap()
}

const OBS: [(u8, u8, u8); 3] = [(0, 0, 1), (1, 1, 1), (1, 0, 0)];

fn chain_mean(ds: &IvDataset, strat: &Stratification, alpha: f64, seed: u64) -> f64 {
    let cfg = GibbsConfig {
        prior_concentration: alpha,
        burn_in: 1000,
        n_samples: 200_000,
        seed,
        ..Default::default()
    };
    let s = gibbs_samples(ds, &cfg, strat).unwrap();
    s.iter().sum::<f64>() / s.len() as f64
}

#[test]
fn enumeration_sanity() {
    // y = 1 under t = 0 pins Y(0) = 1, so the effect leans negative.
    assert!(exact_cell_mean(&[(0, 0, 1)], 1.0) < 0.0);
    // y = 1 under t = 1 pins Y(1) = 1, so it leans positive.
    assert!(exact_cell_mean(&[(1, 1, 1)], 1.0) > 0.0);
    // The two pull in opposite directions by symmetry and cancel.
    assert!(exact_cell_mean(&[(0, 0, 1), (1, 1, 1)], 1.0).abs() < 1e-12);
}

#[test]
fn pooled_toy_matches_enumeration() {
    let ds = toy(&[0.0; 3], &OBS);
    for alpha in [1.0, 0.5] {
        let exact = exact_cell_mean(&OBS, alpha);
        let est = chain_mean(&ds, &Stratification::Pooled, alpha, 11);
        assert!((est - exact).abs() < 0.01, "alpha {alpha}: exact {exact}, chain {est}");
    }
}

#[test]
fn three_cell_toy_matches_enumeration() {
    let ds = toy(&[0.0, 1.0, 2.0], &OBS);
    let strat = Stratification::Discrete { cols: vec![0] };
    let exact: f64 = OBS.iter().map(|o| exact_cell_mean(&[*o], 1.0)).sum::<f64>() / 3.0;
    let est = chain_mean(&ds, &strat, 1.0, 12);
    assert!((est - exact).abs() < 0.01, "exact {exact}, chain {est}");
}

#[test]
fn histogram_mean_tracks_sample_mean() {
    let ds = toy(&[0.0; 3], &OBS);
    let cfg = GibbsConfig {
        n_samples: 50_000,
        seed: 3,
        ..Default::default()
    };
    let h = gibbs_posterior(&ds, &cfg, &Stratification::Pooled).unwrap();
    let exact = exact_cell_mean(&OBS, 1.0);
    assert!((h.mean() - exact).abs() < 0.01, "exact {exact}, histogram {}", h.mean());
}
