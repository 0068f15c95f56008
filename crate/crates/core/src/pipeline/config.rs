//! Run configuration: one document drives every pipeline stage, and its
//! fingerprint stamps every artifact so mismatched stage outputs cannot be
//! mixed silently.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::adaptive::ForecastParams;
use crate::eval::EvalParams;
use crate::levels::{CalibrationParams, Sensitivity};
use crate::signature::{SignatureParams, TailParams};
use crate::stats::fnv1a64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Signature,
    Adaptive,
}

impl Method {
    pub fn label(self) -> &'static str {
        match self {
            Method::Signature => "signature",
            Method::Adaptive => "adaptive",
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        match text {
            "signature" => Ok(Method::Signature),
            "adaptive" => Ok(Method::Adaptive),
            other => Err(format!("unknown method {other:?}; expected signature|adaptive")),
        }
    }
}

/// Cross-validation selection: even contiguous folds over the data span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldConfig {
    pub count: usize,
    /// Which fold's interval is the test set for this run.
    pub test_index: usize,
}

/// Adaptive-chart configuration; the per-pair σ floor is resolved at train
/// time as max(floor_min, floor_rel · mean training rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChartConfig {
    pub tau_minutes: f64,
    pub h: f64,
    pub sigma_floor_min: f64,
    pub sigma_floor_rel: f64,
    /// Residual days seeding the chart before any flagging.
    pub warmup_days: i64,
}

impl Default for ChartConfig {
    fn default() -> Self {
        ChartConfig {
            tau_minutes: 1440.0,
            h: 3.0,
            sigma_floor_min: 0.5,
            sigma_floor_rel: 1e-3,
            warmup_days: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Params {
    /// Active-pair filter: minimum mean training events/minute.
    pub min_mean_rate: f64,
    pub signature: SignatureParams,
    pub tail: TailParams,
    pub forecast: ForecastParams,
    pub chart: ChartConfig,
    pub calibration: CalibrationParams,
    pub eval: EvalParams,
    /// Default spatial tolerance around event epicenters.
    pub radius_default_m: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            min_mean_rate: 0.1,
            signature: SignatureParams::default(),
            tail: TailParams::default(),
            forecast: ForecastParams::default(),
            chart: ChartConfig::default(),
            calibration: CalibrationParams::default(),
            eval: EvalParams::default(),
            radius_default_m: 300.0,
        }
    }
}

/// Input file paths; which ones are required depends on the stage.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Inputs {
    /// Single activity CSV, split by `fold` when present.
    pub data: Option<PathBuf>,
    /// Explicit train/test activity CSVs when not using folds.
    pub train_data: Option<PathBuf>,
    pub test_data: Option<PathBuf>,
    pub cells: Option<PathBuf>,
    pub dbue: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub method: Method,
    /// Service subset to fuse; `None` uses every service in the data.
    pub services: Option<Vec<String>>,
    pub fold: Option<FoldConfig>,
    /// Sensitivity used by `evaluate`.
    pub sensitivity: Sensitivity,
    pub seed: u64,
    /// UTC dates (`YYYY-MM-DD`) fed to the holiday regressor.
    pub holidays: Vec<String>,
    pub params: Params,
    pub inputs: Inputs,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Signature,
            services: None,
            fold: None,
            sensitivity: Sensitivity::H4,
            seed: 0,
            holidays: Vec::new(),
            params: Params::default(),
            inputs: Inputs::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(json: &str) -> Result<Self, String> {
        serde_json::from_str(json).map_err(|e| format!("config: {e}"))
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Reproducibility fingerprint: a stable hash of the canonical JSON form
    /// of the effective configuration.
    pub fn fingerprint(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        format!("{:016x}", fnv1a64(0, canonical.as_bytes()))
    }

    /// Holiday day indices for the forecaster.
    pub fn holiday_days(&self) -> Result<std::collections::BTreeSet<i64>, String> {
        self.holidays
            .iter()
            .map(|d| crate::telemetry::Minute::parse_date(d).map(|m| m.day_index()))
            .collect()
    }
}
