//! Python bindings for the urbanpulse anomaly-detection library.
//!
//! Exposes the core building blocks (activity cubes, the compound deviation
//! distribution, the adaptive chart, filtering and geo helpers) plus the
//! file-based pipeline stages driven by a config JSON string.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use urbanpulse_core::adaptive::{chart_step, AdaptiveChartState, ChartParams};
use urbanpulse_core::eval::haversine_m as haversine_core;
use urbanpulse_core::pipeline::{self, RunConfig};
use urbanpulse_core::signature::{
    compute_weekly_signature, filtfilt_circular, fuse_log_likelihoods, ButterworthParams,
    DeviationModel as CoreDeviationModel, SignatureParams, TailParams,
};
use urbanpulse_core::telemetry::{
    load_activity_csv, write_activity_csv, ActivityCube as CoreCube, CellId, ColumnMap, Minute,
    ServiceId,
};

fn value_err(message: impl ToString) -> PyErr {
    PyValueError::new_err(message.to_string())
}

fn runtime_err(message: impl ToString) -> PyErr {
    PyRuntimeError::new_err(message.to_string())
}

/// Minute-indexed activity counts per (cell, service).
#[pyclass]
struct ActivityCube {
    inner: CoreCube,
}

#[pymethods]
impl ActivityCube {
    /// Loads the canonical activity CSV (`minute,cell_id,service,count`).
    #[staticmethod]
    fn load_csv(path: PathBuf) -> PyResult<Self> {
        let inner = load_activity_csv(&path, &ColumnMap::default()).map_err(value_err)?;
        Ok(ActivityCube { inner })
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        write_activity_csv(&self.inner, &path, &[]).map_err(runtime_err)
    }

    /// Count at (cell, service, ISO minute); None for missing observations.
    fn get(&self, cell: &str, service: &str, minute: &str) -> PyResult<Option<u32>> {
        let cell = CellId::new(cell).map_err(value_err)?;
        let service = ServiceId::new(service).map_err(value_err)?;
        let minute = Minute::parse(minute).map_err(value_err)?;
        Ok(self.inner.get(&cell, &service, minute))
    }

    /// `(start, end)` of the declared span as ISO minutes (end exclusive).
    fn span(&self) -> (String, String) {
        let span = self.inner.span();
        (span.start.to_string(), span.end.to_string())
    }

    fn cells(&self) -> Vec<String> {
        self.inner.cells().iter().map(|c| c.as_str().to_string()).collect()
    }

    fn services(&self) -> Vec<String> {
        self.inner.services().iter().map(|s| s.as_str().to_string()).collect()
    }

    fn observation_count(&self) -> usize {
        self.inner.observation_count()
    }

    fn total_count(&self) -> u64 {
        self.inner.total_count()
    }

    /// Weekly signature of one pair: 10080 low-pass-filtered medians.
    #[pyo3(signature = (cell, service, order=4, cutoff_per_min=1.0/120.0, min_training_weeks=3))]
    fn weekly_signature(
        &self,
        cell: &str,
        service: &str,
        order: usize,
        cutoff_per_min: f64,
        min_training_weeks: usize,
    ) -> PyResult<Vec<f64>> {
        let key = (
            CellId::new(cell).map_err(value_err)?,
            ServiceId::new(service).map_err(value_err)?,
        );
        let series = self
            .inner
            .pair(&key)
            .ok_or_else(|| value_err(format!("no data for ({cell}, {service})")))?;
        let params = SignatureParams {
            butterworth: ButterworthParams { order, cutoff_per_min },
            min_training_weeks,
        };
        let signature = compute_weekly_signature(series, &params).map_err(value_err)?;
        Ok(signature.values().to_vec())
    }
}

/// Compound empirical + Gamma deviation distribution.
#[pyclass]
struct DeviationModel {
    inner: CoreDeviationModel,
}

#[pymethods]
impl DeviationModel {
    /// Fits the model to training deviations.
    #[staticmethod]
    #[pyo3(signature = (deviations, h=2.32, min_sample=10080, min_exceedances=30))]
    fn fit(
        deviations: Vec<f64>,
        h: f64,
        min_sample: usize,
        min_exceedances: usize,
    ) -> PyResult<Self> {
        let params = TailParams { h, min_sample, min_exceedances };
        let inner = CoreDeviationModel::fit(&deviations, &params).map_err(value_err)?;
        Ok(DeviationModel { inner })
    }

    /// Exceedance likelihood P[X >= eps].
    fn survival(&self, eps: f64) -> f64 {
        self.inner.survival(eps)
    }

    fn log_survival(&self, eps: f64) -> f64 {
        self.inner.log_survival(eps)
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta()
    }

    #[getter]
    fn p_tail(&self) -> f64 {
        self.inner.p_tail()
    }

    #[getter]
    fn gamma_shape(&self) -> f64 {
        self.inner.tail().shape
    }

    #[getter]
    fn gamma_scale(&self) -> f64 {
        self.inner.tail().scale
    }

    #[getter]
    fn is_fallback(&self) -> bool {
        self.inner.is_fallback()
    }

    #[getter]
    fn sample_size(&self) -> usize {
        self.inner.sample_size()
    }
}

/// Adaptive Shewhart chart over forecast residuals.
#[pyclass]
struct AdaptiveChart {
    params: ChartParams,
    state: AdaptiveChartState,
}

#[pymethods]
impl AdaptiveChart {
    #[new]
    #[pyo3(signature = (tau_minutes=1440.0, h=3.0, sigma_floor=0.5))]
    fn new(tau_minutes: f64, h: f64, sigma_floor: f64) -> Self {
        AdaptiveChart {
            params: ChartParams { tau_minutes, h, sigma_floor },
            state: AdaptiveChartState::empty(),
        }
    }

    /// Seeds the chart from residuals with flagging disabled.
    fn seed(&mut self, residuals: Vec<f64>) {
        self.state = AdaptiveChartState::seed(&self.params, &residuals);
    }

    /// One chart step; returns `(z, flagged)`. Flagged deviations do not
    /// update the chart.
    fn step(&mut self, eps: f64) -> PyResult<(f64, bool)> {
        if !self.state.is_warm() {
            return Err(runtime_err("chart must be seeded before stepping"));
        }
        let score = chart_step(&mut self.state, &self.params, eps);
        Ok((score.z, score.flagged))
    }

    /// Ages the state by `minutes` without incorporating anything.
    fn decay(&mut self, minutes: f64) {
        self.state.decay(&self.params, minutes);
    }

    fn mean(&self) -> f64 {
        self.state.mean()
    }

    fn std(&self) -> f64 {
        self.state.std()
    }

    /// Weight of an observation `age_minutes` old: 2^(−age/τ).
    fn decay_weight(&self, age_minutes: f64) -> f64 {
        self.params.decay_weight(age_minutes)
    }
}

/// Haversine distance in meters between two (lat, lon) points.
#[pyfunction]
fn haversine_m(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    haversine_core(lat1, lon1, lat2, lon2)
}

/// Zero-phase circular Butterworth low-pass of a periodic series.
#[pyfunction]
#[pyo3(signature = (values, order=4, cutoff_per_min=1.0/120.0))]
fn butterworth_filtfilt(values: Vec<f64>, order: usize, cutoff_per_min: f64) -> PyResult<Vec<f64>> {
    let params = ButterworthParams { order, cutoff_per_min };
    params.validate().map_err(value_err)?;
    if values.is_empty() {
        return Err(value_err("cannot filter an empty series"));
    }
    Ok(filtfilt_circular(&params, &values))
}

/// Fuses per-service log-likelihoods into one score; returns the fused
/// natural log.
#[pyfunction]
fn fuse(log_likelihoods: Vec<f64>) -> PyResult<f64> {
    fuse_log_likelihoods(log_likelihoods.into_iter().enumerate().map(|(i, l)| (i, l)))
        .map(|score| score.log_value)
        .ok_or_else(|| value_err("cannot fuse an empty set of likelihoods"))
}

fn parse_config(config_json: &str) -> PyResult<RunConfig> {
    RunConfig::from_json(config_json).map_err(value_err)
}

fn summary_to_string(summary: serde_json::Value) -> String {
    serde_json::to_string(&summary).expect("summary serializes")
}

/// Runs one pipeline stage; returns the stage summary as a JSON string.
#[pyfunction]
#[pyo3(signature = (stage, config_json, out_dir, force=false, allow_partial=false))]
fn run_stage(
    stage: &str,
    config_json: &str,
    out_dir: PathBuf,
    force: bool,
    allow_partial: bool,
) -> PyResult<String> {
    let config = parse_config(config_json)?;
    let out: &Path = &out_dir;
    let result = match stage {
        "synth" => pipeline::stage_synth(&config, out),
        "train" => pipeline::stage_train(&config, out),
        "calibrate" => pipeline::stage_calibrate(&config, out, force),
        "detect" => pipeline::stage_detect(&config, out, force),
        "evaluate" => pipeline::stage_evaluate(&config, out, force),
        "pr-curve" => pipeline::stage_pr_curve(&config, out, force, allow_partial),
        "export-map" => pipeline::stage_export_map(&config, out, force),
        other => return Err(value_err(format!("unknown stage {other:?}"))),
    };
    result.map(summary_to_string).map_err(runtime_err)
}

/// The reproducibility fingerprint of a config JSON string.
#[pyfunction]
fn config_fingerprint(config_json: &str) -> PyResult<String> {
    Ok(parse_config(config_json)?.fingerprint())
}

/// Deduplicated alarm count per level from an alarm CSV, as a sanity helper.
#[pyfunction]
fn alarm_level_counts(path: PathBuf) -> PyResult<Vec<(u8, usize)>> {
    let content = std::fs::read_to_string(&path).map_err(runtime_err)?;
    let mut counts: Vec<(u8, usize)> = vec![(1, 0), (2, 0), (3, 0)];
    let mut seen = BTreeSet::new();
    for line in content.lines() {
        if line.starts_with('#') || line.starts_with("minute,") || line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 5 {
            return Err(value_err(format!("malformed alarm row: {line:?}")));
        }
        let level: u8 = parts[2].parse().map_err(|_| value_err("bad level"))?;
        if !seen.insert((parts[0].to_string(), parts[1].to_string())) {
            return Err(value_err("duplicate antenna-minute in alarm stream"));
        }
        for entry in counts.iter_mut() {
            if level >= entry.0 {
                entry.1 += 1;
            }
        }
    }
    Ok(counts)
}

#[pymodule]
fn urbanpulse(_py: Python<'_>, m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<ActivityCube>()?;
    m.add_class::<DeviationModel>()?;
    m.add_class::<AdaptiveChart>()?;
    m.add_function(wrap_pyfunction!(haversine_m, m)?)?;
    m.add_function(wrap_pyfunction!(butterworth_filtfilt, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(run_stage, m)?)?;
    m.add_function(wrap_pyfunction!(config_fingerprint, m)?)?;
    m.add_function(wrap_pyfunction!(alarm_level_counts, m)?)?;
    Ok(())
}
