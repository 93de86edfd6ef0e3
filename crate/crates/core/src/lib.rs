//! Partial identification of treatment effects with a binary instrument.
//!
//! Closed-form sharp bounds, an LP oracle over the sixteen response strata,
//! synthetic benchmark generators, RCT-to-IV conversion and interval
//! estimators (plug-in and Bayesian).

pub mod benchmarks;
pub mod bounds;
pub mod dataset;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod functions;
pub mod interval;
pub mod lp;
pub mod prior;
pub mod rct2iv;
pub mod rng;
pub mod sampling;
pub mod strata;

pub use bounds::{conditional_bounds, sate_bounds, CondBounds, CondProbSource, SateBounds};
pub use dataset::{IvDataset, Labels, Row, YScale};
pub use error::{Error, Result};
pub use interval::Interval;
pub use strata::{CondProbs, StrataDist, StratumIndex};
