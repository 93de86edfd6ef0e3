//! Exit-code classification.

use ivbounds::Error;

pub const CONFIG: i32 = 2;
pub const DATA: i32 = 3;
pub const NUMERIC: i32 = 4;

/// A configuration problem detected by the CLI itself.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_err(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn classify(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::NonBinaryOutcome => CONFIG,
        Error::Data(_)
        | Error::MissingColumns(_)
        | Error::EmptyInstrumentArm(_)
        | Error::SingleArm
        | Error::Io(_)
        | Error::Csv(_)
        | Error::Json(_) => DATA,
        Error::InvalidProbabilities(_)
        | Error::CrossedInterval { .. }
        | Error::Contract(_)
        | Error::Numeric(_)
        | Error::Sharpness { .. } => NUMERIC,
    }
}

pub fn code_for(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return classify(e);
        }
        if cause.is::<ConfigError>() || cause.is::<toml::de::Error>() {
            return CONFIG;
        }
        if let Some(e) = cause.downcast_ref::<serde_json::Error>() {
            return if e.is_io() { DATA } else { CONFIG };
        }
        if cause.is::<std::io::Error>() || cause.is::<csv::Error>() {
            return DATA;
        }
    }
    DATA
}
