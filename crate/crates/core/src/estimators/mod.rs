//! Interval estimators: plug-in bounds and a Gibbs posterior over the SATE.

pub mod condprob;
pub mod gibbs;
pub mod histogram;
pub mod plugin;

pub use condprob::{fit_condprob_model, CondProbModel, ModelKind, Stratification};
pub use gibbs::{gibbs_posterior, gibbs_posterior_chains, gibbs_posterior_thresholded, gibbs_samples, GibbsConfig};
pub use histogram::{quantile_interval, PosteriorHistogram, DEFAULT_BINS};
pub use plugin::{plugin_bounds, plugin_bounds_default};
