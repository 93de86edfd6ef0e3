use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),

    #[error("crossed interval: lower {lower} > upper {upper}")]
    CrossedInterval { lower: f64, upper: f64 },

    #[error("dataset error: {0}")]
    Data(String),

    #[error("missing columns: {}", .0.join(", "))]
    MissingColumns(Vec<String>),

    #[error("empty instrument arm z={0}")]
    EmptyInstrumentArm(u8),

    #[error("single-arm table: both treatment arms must be nonempty")]
    SingleArm,

    #[error("outcome is not binary; binarize it or use the threshold-grid path")]
    NonBinaryOutcome,

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("sharpness discrepancy: lower gap {lower_gap:e}, upper gap {upper_gap:e} (tol {tol:e})")]
    Sharpness { lower_gap: f64, upper_gap: f64, tol: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
