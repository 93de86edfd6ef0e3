//! Independent checks of the closed-form bounds against a brute-force vertex
//! enumeration of the strata polytope, and against the simplex solver.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use ivbounds::bounds::{conditional_bounds, phi_lower, phi_upper, CondBounds};
use ivbounds::lp::solve_min_max;
use ivbounds::strata::{sate_of_strata, strata_to_condprobs, CondProbs, StrataDist};

/// Column `s` of the observational map, built from the stratum bits directly.
fn column(s: usize) -> [f64; 8] {
    let (t0, t1, y0, y1) = ((s >> 3) & 1, (s >> 2) & 1, (s >> 1) & 1, s & 1);
    let mut col = [0.0; 8];
    for z in 0..2 {
        let t = if z == 0 { t0 } else { t1 };
        let y = if t == 0 { y0 } else { y1 };
        col[4 * z + 2 * y + t] = 1.0;
    }
    col
}

fn effect(s: usize) -> f64 {
    (s & 1) as f64 - ((s >> 1) & 1) as f64
}

/// `(min, max)` of the effect over basic feasible solutions, `None` if there are none.
fn enumerate_vertices(p: &[f64; 8]) -> Option<(f64, f64)> {
    let rows = [0usize, 1, 2, 3, 4, 5, 6];
    let cols: Vec<[f64; 8]> = (0..16).map(column).collect();
    let b = DVector::from_iterator(7, rows.iter().map(|&r| p[r]));
    let mut best: Option<(f64, f64)> = None;
    let mut subset = [0usize, 1, 2, 3, 4, 5, 6];
    loop {
        let m = DMatrix::from_fn(7, 7, |i, j| cols[subset[j]][rows[i]]);
        let lu = m.lu();
        if lu.determinant().abs() > 1e-9 {
            if let Some(x) = lu.solve(&b) {
                if x.iter().all(|v| *v >= -1e-10) {
                    // Every equality, including the dropped row, must hold.
                    let mut q = [0.0; 16];
                    for (j, &s) in subset.iter().enumerate() {
                        q[s] = x[j].max(0.0);
                    }
                    let ok = (0..8).all(|r| ((0..16).map(|s| cols[s][r] * q[s]).sum::<f64>() - p[r]).abs() < 1e-9);
                    if ok {
                        let v: f64 = (0..16).map(|s| effect(s) * q[s]).sum();
                        best = Some(match best {
                            None => (v, v),
                            Some((lo, hi)) => (lo.min(v), hi.max(v)),
                        });
                    }
                }
            }
        }
        // next 7-subset of 0..16 in lexicographic order
        let mut i = 7;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if subset[i] < 16 - 7 + i {
                break;
            }
        }
        subset[i] += 1;
        for j in i + 1..7 {
            subset[j] = subset[j - 1] + 1;
        }
    }
}

fn dirichlet_strata() -> impl Strategy<Value = StrataDist> {
    prop::array::uniform16(1e-12f64..1.0).prop_map(|u| StrataDist::from_weights(u.map(|v| -v.ln())).unwrap())
}

fn perturbed_p() -> impl Strategy<Value = CondProbs> {
    (dirichlet_strata(), prop::array::uniform8(-0.15f64..0.15)).prop_map(|(q, noise)| {
        let base = strata_to_condprobs(&q);
        let mut raw = *base.as_array();
        for (v, e) in raw.iter_mut().zip(noise) {
            *v = (*v + e).max(0.0);
        }
        CondProbs::renormalized(raw).unwrap()
    })
}

#[test]
fn enumerator_on_point_masses() {
    // Complier with Y(0)=0, Y(1)=1: the only consistent distribution.
    let q = StrataDist::point_mass(ivbounds::strata::StratumIndex::new(0, 1, 0, 1).unwrap());
    let p = strata_to_condprobs(&q);
    let (lo, hi) = enumerate_vertices(p.as_array()).unwrap();
    assert!((lo - 1.0).abs() < 1e-9 && (hi - 1.0).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn closed_form_matches_vertex_enumeration(q in dirichlet_strata()) {
        let p = strata_to_condprobs(&q);
        let (lo, hi) = enumerate_vertices(p.as_array()).expect("strata-induced p is feasible");
        prop_assert!((phi_lower(&p).max() - lo).abs() <= 1e-8);
        prop_assert!((phi_upper(&p).min() - hi).abs() <= 1e-8);
    }

    #[test]
    fn crossed_iff_no_vertex(p in perturbed_p()) {
        let crossed = conditional_bounds(&p).is_crossed();
        let vertices = enumerate_vertices(p.as_array());
        prop_assert_eq!(crossed, vertices.is_none(), "p = {:?}", p);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn truth_is_contained(q in dirichlet_strata()) {
        let p = strata_to_condprobs(&q);
        let v = sate_of_strata(&q);
        match conditional_bounds(&p) {
            CondBounds::Valid(i) => prop_assert!(i.lower() - 1e-12 <= v && v <= i.upper() + 1e-12),
            other => prop_assert!(false, "strata-induced p crossed: {other:?}"),
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    #[test]
    fn simplex_matches_closed_form(q in dirichlet_strata()) {
        let p = strata_to_condprobs(&q);
        let (min, max) = solve_min_max(&p).unwrap();
        prop_assert!((min.value.unwrap() - phi_lower(&p).max()).abs() <= 1e-8);
        prop_assert!((max.value.unwrap() - phi_upper(&p).min()).abs() <= 1e-8);
    }

    #[test]
    fn crossed_iff_simplex_infeasible(p in perturbed_p()) {
        let (min, _) = solve_min_max(&p).unwrap();
        prop_assert_eq!(conditional_bounds(&p).is_crossed(), !min.is_optimal());
    }
}
