//! Plug-in bounds: closed-form bounds at estimated conditional probabilities.

use crate::bounds::{continuous_outcome_bounds, SateBounds, DEFAULT_THRESHOLDS};
use crate::dataset::IvDataset;
use crate::error::Result;
use crate::estimators::condprob::{fit_condprob_model, ModelKind};

/// Fits `kind`, averages per-row bounds and clips crossed rows.
///
/// Non-binary outcomes in `[0, 1]` go through a `thresholds`-point grid.
pub fn plugin_bounds(dataset: &IvDataset, kind: &ModelKind, thresholds: usize) -> Result<SateBounds> {
    dataset.validate()?;
    continuous_outcome_bounds(dataset, |d| fit_condprob_model(d, kind), thresholds)
}

pub fn plugin_bounds_default(dataset: &IvDataset, kind: &ModelKind) -> Result<SateBounds> {
    plugin_bounds(dataset, kind, DEFAULT_THRESHOLDS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Row;
    use crate::prior::realize_observations;
    use crate::rng::stream;
    use crate::strata::{StrataDist, StratumIndex};
    use rand::Rng;

    fn sample(q: StrataDist, n: usize, seed: u64) -> IvDataset {
        let mut rng = stream(seed, "test/plugin");
        let z: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
        let strata = vec![q; n];
        let obs = realize_observations(&z, &strata[..], &mut rng);
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
    fn complier_effective_point_mass() {
        let q = StrataDist::point_mass(StratumIndex::new(0, 1, 0, 1).unwrap());
        let b = plugin_bounds_default(&sample(q, 5000, 1), &ModelKind::Pooled).unwrap();
        assert!(b.interval.lower() > 0.95, "{:?}", b);
    }

    #[test]
    fn uniform_strata_identified_set() {
        let b = plugin_bounds_default(&sample(StrataDist::uniform(), 20_000, 2), &ModelKind::Pooled).unwrap();
        assert!(
            (b.interval.lower() + 0.5).abs() < 0.03 && (b.interval.upper() - 0.5).abs() < 0.03,
            "{:?}",
            b
        );
    }

    #[test]
    fn tiny_dataset_is_finite() {
        let b = plugin_bounds_default(&sample(StrataDist::uniform(), 8, 3), &ModelKind::Pooled).unwrap();
        assert!(b.interval.lower().is_finite() && b.interval.upper().is_finite());
    }
}
