//! Serializable propensity score specifications.
//!
//! A spec is a sum of terms over standardized columns plus an intercept:
//!
//! ```json
//! {"terms": [
//!    {"kind": "linear", "col": "age", "coef": 0.4},
//!    {"kind": "square", "col": "age", "coef": -0.3},
//!    {"kind": "product", "a": "married", "b": "nodegree", "coef": 0.5},
//!    {"kind": "tanh_linear", "weights": [["education", 1.0], ["age", -0.5]], "coef": 0.8}
//!  ],
//!  "intercept": null}
//! ```
//!
//! `square` is `z² − 1` for the standardized column `z`, so it is mean zero on
//! the reference table. A missing intercept is calibrated by the converter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Term {
    Linear { col: String, coef: f64 },
    Square { col: String, coef: f64 },
    Product { a: String, b: String, coef: f64 },
    TanhLinear { weights: Vec<(String, f64)>, coef: f64 },
}

impl Term {
    pub fn columns(&self) -> Vec<&str> {
        match self {
            Term::Linear { col, .. } | Term::Square { col, .. } => vec![col],
            Term::Product { a, b, .. } => vec![a, b],
            Term::TanhLinear { weights, .. } => weights.iter().map(|(c, _)| c.as_str()).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PropensitySpec {
    #[serde(default)]
    pub terms: Vec<Term>,
    #[serde(default)]
    pub intercept: Option<f64>,
}

impl PropensitySpec {
    pub fn constant(intercept: f64) -> Self {
        Self {
            terms: Vec::new(),
            intercept: Some(intercept),
        }
    }

    pub fn columns(&self) -> Vec<&str> {
        let mut cols: Vec<&str> = self.terms.iter().flat_map(Term::columns).collect();
        cols.sort_unstable();
        cols.dedup();
        cols
    }
}

/// Named columns with the standardization statistics of a reference table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpace {
    pub names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl ColumnSpace {
    /// Statistics of `rows` (row-major, one entry per name). Constant columns get sd 1.
    pub fn fit(names: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let k = names.len();
        let n = rows.len() as f64;
        let mut means = vec![0.0; k];
        let mut sds = vec![1.0; k];
        if !rows.is_empty() {
            for j in 0..k {
                means[j] = rows.iter().map(|r| r[j]).sum::<f64>() / n;
            }
        }
        if rows.len() > 1 {
            for j in 0..k {
                let var = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / (n - 1.0);
                if var > 0.0 {
                    sds[j] = var.sqrt();
                }
            }
        }
        Self { names, means, sds }
    }

    fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum ResolvedTerm {
    Linear(usize, f64),
    Square(usize, f64),
    Product(usize, usize, f64),
    TanhLinear(Vec<(usize, f64)>, f64),
}

/// A spec bound to a column space. `eval` takes raw values in space order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedSpec {
    space: ColumnSpace,
    terms: Vec<ResolvedTerm>,
    pub intercept: Option<f64>,
}

impl ResolvedSpec {
    /// Fails with the unknown column names if the spec references columns outside `space`.
    pub fn resolve(spec: &PropensitySpec, space: &ColumnSpace) -> Result<Self> {
        let missing: Vec<String> = spec
            .columns()
            .into_iter()
            .filter(|c| space.index(c).is_none())
            .map(str::to_owned)
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingColumns(missing));
        }
        let ix = |c: &str| space.index(c).expect("checked above");
        let terms = spec
            .terms
            .iter()
            .map(|t| match t {
                Term::Linear { col, coef } => ResolvedTerm::Linear(ix(col), *coef),
                Term::Square { col, coef } => ResolvedTerm::Square(ix(col), *coef),
                Term::Product { a, b, coef } => ResolvedTerm::Product(ix(a), ix(b), *coef),
                Term::TanhLinear { weights, coef } => {
                    ResolvedTerm::TanhLinear(weights.iter().map(|(c, w)| (ix(c), *w)).collect(), *coef)
                }
            })
            .collect();
        Ok(Self {
            space: space.clone(),
            terms,
            intercept: spec.intercept,
        })
    }

    pub fn space(&self) -> &ColumnSpace {
        &self.space
    }

    /// The score without intercept.
    pub fn score(&self, raw: &[f64]) -> f64 {
        let z = |j: usize| (raw[j] - self.space.means[j]) / self.space.sds[j];
        self.terms
            .iter()
            .map(|t| match t {
                ResolvedTerm::Linear(j, c) => c * z(*j),
                ResolvedTerm::Square(j, c) => c * (z(*j).powi(2) - 1.0),
                ResolvedTerm::Product(a, b, c) => c * z(*a) * z(*b),
                ResolvedTerm::TanhLinear(w, c) => c * w.iter().map(|(j, wj)| wj * z(*j)).sum::<f64>().tanh(),
            })
            .sum()
    }
}
