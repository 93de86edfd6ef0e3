use proptest::prelude::*;

use ivbounds::dataset::{IvDataset, Labels, Row};
use ivbounds::estimators::{quantile_interval, PosteriorHistogram};
use ivbounds::eval::{
    aggregate, calibration_curve, norm_width, validity_label, validity_true_bounds, EvalRecord, ValidityKind,
    CALIBRATION_LEVELS,
};
use ivbounds::interval::Interval;
use ivbounds::prior::{draw_dgp, sample_dataset, PriorConfig};
use ivbounds::rct2iv::fixtures::synthetic_rct;
use ivbounds::rct2iv::{balance_arms, convert, ConversionConfig, PropensitySpec, Term};
use ivbounds::strata::NUM_STRATA;

fn rows_strategy() -> impl Strategy<Value = (usize, Vec<Row>)> {
    (0usize..4).prop_flat_map(|d| {
        let row = (prop::collection::vec(-1e6f64..1e6, d), 0u8..2, 0u8..2, 0.0f64..=1.0).prop_map(|(x, z, t, y)| Row {
            x,
            z,
            t,
            y,
        });
        (Just(d), prop::collection::vec(row, 1..40))
    })
}

fn interval() -> impl Strategy<Value = Interval> {
    (-1.0f64..1.0, 0.0f64..1.0).prop_map(|(a, w)| Interval::new(a, (a + w).min(1.0)).unwrap())
}

fn histogram() -> impl Strategy<Value = PosteriorHistogram> {
    prop::collection::vec(-1.0f64..=1.0, 1..300).prop_map(|v| PosteriorHistogram::from_samples(&v, 64))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dataset_round_trips((d, rows) in rows_strategy(), sate in -1.0f64..1.0) {
        let dir = tempfile::tempdir().unwrap();
        let ds = IvDataset::new(d, rows, 7, "prop").unwrap()
            .with_labels(Labels { sate, lower: Some(sate - 0.1), upper: Some(sate + 0.1) }).unwrap();
        let (csv, _) = ds.save(dir.path(), "ds").unwrap();
        let back = IvDataset::load(&csv).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn quantile_intervals_nest(h in histogram(), a in 0.001f64..0.5, b in 0.001f64..0.5) {
        let (small, large) = if a < b { (a, b) } else { (b, a) };
        let wide = quantile_interval(&h, small).unwrap();
        let narrow = quantile_interval(&h, large).unwrap();
        prop_assert!(wide.contains_interval(&narrow));
    }

    #[test]
    fn histogram_merge_is_associative(a in histogram(), b in histogram(), c in histogram()) {
        let mut left = a.clone();
        left.merge(&b).unwrap();
        left.merge(&c).unwrap();
        let mut bc = b.clone();
        bc.merge(&c).unwrap();
        let mut right = a.clone();
        right.merge(&bc).unwrap();
        prop_assert_eq!(&left, &right);
        prop_assert!((left.bin_mass().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn calibration_is_monotone(hs in prop::collection::vec((histogram(), -1.0f64..1.0), 1..20)) {
        let curve = calibration_curve(&hs, &CALIBRATION_LEVELS).unwrap();
        for w in curve.windows(2) {
            prop_assert!(w[1].coverage.mean >= w[0].coverage.mean);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn true_bound_validity_implies_label_validity(est in interval(), truth in interval(), u in 0.0f64..=1.0) {
        if validity_true_bounds(&est, &truth) == 1 {
            let label = truth.lower() + u * truth.width();
            prop_assert_eq!(validity_label(&est, label.min(truth.upper())), 1);
        }
    }

    #[test]
    fn norm_width_is_affine_invariant(est in interval(), scale in 0.01f64..100.0, shift in -50.0f64..50.0) {
        let base = norm_width(&est, -1.0, 1.0).unwrap();
        let moved = Interval::new(est.lower() * scale + shift, est.upper() * scale + shift).unwrap();
        let other = norm_width(&moved, -scale + shift, scale + shift).unwrap();
        prop_assert!((base - other).abs() < 1e-9);
    }

    #[test]
    fn aggregation_ignores_seed_order(ws in prop::collection::vec(0.0f64..1.0, 2..12), rot in 0usize..12) {
        let recs: Vec<EvalRecord> = ws.iter().enumerate().map(|(i, &w)| EvalRecord {
            method: if i % 2 == 0 { "a".into() } else { "b".into() },
            seed: i as u64,
            validity: u8::from(w > 0.5),
            validity_kind: ValidityKind::Label,
            norm_width: w,
            time_per_1k_s: w * 2.0,
            interval: Interval::new(0.0, w).unwrap(),
        }).collect();
        let mut shuffled = recs.clone();
        let k = rot % shuffled.len();
        shuffled.rotate_left(k);
        shuffled.reverse();
        prop_assert_eq!(aggregate(&recs), aggregate(&shuffled));
    }
}

#[test]
fn prior_datasets_carry_consistent_labels() {
    let cfg = PriorConfig {
        n: 128,
        ..Default::default()
    };
    for seed in 0..20 {
        let dgp = draw_dgp(seed, &cfg).unwrap();
        let ds = sample_dataset(&dgp, seed).unwrap();
        let l = ds.labels.unwrap();
        assert!(l.lower.unwrap() <= l.sate + 1e-12 && l.sate <= l.upper.unwrap() + 1e-12);
        for q in ds.strata.as_ref().unwrap() {
            assert!((q.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(q.probs().len(), NUM_STRATA);
        }
        assert!((l.sate - dgp.sate).abs() < 1e-12);
    }
}

fn synthetic_config(beta: f64, seed: u64) -> ConversionConfig {
    ConversionConfig {
        observed_cols: vec!["o1".into(), "o2".into()],
        hidden_cols: vec!["u1".into()],
        pz: PropensitySpec {
            terms: vec![Term::Linear {
                col: "o1".into(),
                coef: 0.7,
            }],
            intercept: None,
        },
        pz_clip: (0.05, 0.95),
        pt: PropensitySpec {
            terms: vec![
                Term::Linear {
                    col: "u1".into(),
                    coef: 1.2,
                },
                Term::Product {
                    a: "o1".into(),
                    b: "u1".into(),
                    coef: 0.4,
                },
            ],
            intercept: None,
        },
        pt_clip: (0.01, 0.99),
        beta,
        target_z: 0.5,
        target_t: 0.5,
        seed,
    }
}

#[test]
fn conversion_preserves_the_effect_label() {
    for seed in 0..5 {
        let rct = synthetic_rct(8000, 0.5, seed);
        let (balanced, kept) = balance_arms(&rct.table, seed).unwrap();
        let known = rct.select(&kept);
        let conv = convert(&balanced, &synthetic_config(2.0, seed)).unwrap();
        let n = balanced.n() as f64;
        assert!((conv.report.acceptance_rate - 0.5).abs() <= 4.0 * (0.25 / n).sqrt());
        let effects = known.effects();
        let acc: Vec<f64> = conv.accepted.iter().map(|&i| effects[i]).collect();
        let acc_mean = acc.iter().sum::<f64>() / acc.len() as f64;
        assert!(
            (acc_mean - conv.report.pate_label).abs() < 0.15,
            "{acc_mean} vs {}",
            conv.report.pate_label
        );
        // Propensity preservation: accepted treatment rates follow p_t.
        let within = conv.report.preservation.iter().filter(|b| b.within_3se).count();
        assert!(within >= 8, "{:?}", conv.report.preservation);
    }
}

#[test]
fn stronger_instruments_raise_rho() {
    let rct = synthetic_rct(6000, 0.5, 1);
    let (balanced, _) = balance_arms(&rct.table, 1).unwrap();
    let rho = |beta| convert(&balanced, &synthetic_config(beta, 3)).unwrap().report.rho_zt;
    assert!(rho(0.0).abs() < 3.0 / (3000f64).sqrt());
    assert!(rho(4.0) > rho(1.0));
}
