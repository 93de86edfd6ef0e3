use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A closed interval `[lower, upper]` with `lower <= upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawInterval")]
pub struct Interval {
    lower: f64,
    upper: f64,
}

#[derive(Deserialize)]
struct RawInterval {
    lower: f64,
    upper: f64,
}

impl TryFrom<RawInterval> for Interval {
    type Error = Error;
    fn try_from(r: RawInterval) -> Result<Self> {
        Interval::new(r.lower, r.upper)
    }
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !lower.is_finite() || !upper.is_finite() {
            return Err(Error::Numeric(format!(
                "interval endpoints must be finite, got [{lower}, {upper}]"
            )));
        }
        if lower > upper {
            return Err(Error::CrossedInterval { lower, upper });
        }
        Ok(Self { lower, upper })
    }

    pub fn point(v: f64) -> Result<Self> {
        Self::new(v, v)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lower <= other.lower && other.upper <= self.upper
    }
}

impl std::fmt::Display for Interval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}, {}]", self.lower, self.upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_crossed_and_non_finite() {
        assert!(matches!(Interval::new(0.5, 0.1), Err(Error::CrossedInterval { .. })));
        assert!(Interval::new(f64::NAN, 0.0).is_err());
        let i = Interval::new(-0.5, 0.5).unwrap();
        assert_eq!(i.width(), 1.0);
        assert!(i.contains(0.5) && !i.contains(0.51));
    }

    #[test]
    fn deserialization_validates() {
        let ok: Interval = serde_json::from_str(r#"{"lower":0.1,"upper":0.2}"#).unwrap();
        assert_eq!(ok.lower(), 0.1);
        assert!(serde_json::from_str::<Interval>(r#"{"lower":0.3,"upper":0.2}"#).is_err());
    }
}
