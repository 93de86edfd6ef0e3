//! Run configuration: one TOML file per run, overridden field by field by flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ivbounds::benchmarks::DgpFamily;
use ivbounds::eval::Method;
use ivbounds::rct2iv::ConversionConfig;
use serde::{Deserialize, Serialize};

use crate::exit::config_err;

pub const OUT_DIR_ENV: &str = "IVB_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "ivb-out";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
    pub gen: GenSection,
    pub convert: ConvertSection,
    pub bounds: BoundsSection,
    pub estimate: EstimateSection,
    pub eval: EvalSection,
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenSection {
    pub prior: PriorSection,
    pub binary: BinarySection,
    pub calib: CalibSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub count: Option<usize>,
    pub n: Option<usize>,
    pub d_min: Option<usize>,
    pub d_max: Option<usize>,
    pub gamma: Option<f64>,
    pub recenter: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BinarySection {
    pub count: Option<usize>,
    pub n: Option<usize>,
    pub d: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibSection {
    pub count: Option<usize>,
    pub family: Option<DgpFamily>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub a: Option<f64>,
    pub gamma_t: Option<f64>,
    pub gamma_y: Option<f64>,
    pub sigma_y: Option<f64>,
    pub clip: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvertSection {
    pub preset: Option<String>,
    pub beta: Option<f64>,
    pub betas: Option<Vec<f64>>,
    /// Custom conversion, used when no preset is given.
    pub conversion: Option<ConversionConfig>,
    pub treatment: Option<String>,
    pub outcome: Option<String>,
    pub star_contrast: Option<String>,
    pub star_outcome: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsSection {
    pub method: Option<String>,
    pub model: Option<ivbounds::estimators::ModelKind>,
    pub thresholds: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateSection {
    pub method: Option<Method>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub seeds: Option<usize>,
    pub benchmark: Option<String>,
    pub n: Option<usize>,
    pub methods: Option<Vec<Method>>,
    pub timing: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub strength: StrengthSection,
    pub sensitivity: SensitivitySection,
    pub calibration: CalibrationSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrengthSection {
    pub betas: Option<Vec<f64>>,
    pub preset: Option<String>,
    pub estimator: Option<String>,
    pub analog_n: Option<usize>,
    pub seeds: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainSection {
    pub burn_in: Option<usize>,
    pub samples: Option<usize>,
    pub thresholds: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensitivitySection {
    pub family: Option<DgpFamily>,
    pub seeds: Option<usize>,
    pub alpha: Option<f64>,
    pub n_grid: Option<Vec<usize>>,
    pub d_grid: Option<Vec<usize>>,
    pub n_fixed: Option<usize>,
    pub d_fixed: Option<usize>,
    pub chain: ChainSection,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub family: Option<DgpFamily>,
    pub seeds: Option<usize>,
    pub n: Option<usize>,
    pub d: Option<usize>,
    pub levels: Option<Vec<f64>>,
    pub chain: ChainSection,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| config_err(format!("config {}: {}", path.display(), e.message().trim())))
    }

    pub fn load_opt(path: Option<&Path>) -> Result<Self> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn out_dir(&self, flag: Option<&Path>) -> PathBuf {
        flag.map(Path::to_path_buf)
            .or_else(|| self.out_dir.clone())
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}

/// `flag`, else the config value, else the default.
pub fn pick<T: Clone>(flag: Option<T>, config: &Option<T>, default: T) -> T {
    flag.or_else(|| config.clone()).unwrap_or(default)
}
