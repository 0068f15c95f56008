//! Pipeline orchestration: a single `RunConfig` drives training, calibration,
//! detection and evaluation, in memory or through on-disk artifacts.

pub mod artifacts;
mod config;
mod stages;

pub use config::{ChartConfig, FoldConfig, Inputs, Method, Params, RunConfig};
pub use stages::{
    resolve_train_test, stage_calibrate, stage_detect, stage_evaluate, stage_export_map,
    stage_pr_curve, stage_synth, stage_train, StagePaths,
};

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adaptive::{
    chart_step, AdaptiveChartState, AdaptiveError, ChartParams, ForecastModel,
};
use crate::eval::{
    expand_ground_truth, pr_curve, score_alarm_set, EvalError, EvalUniverse, EvaluationReport,
    GroundTruthMask, PrPoint, UncommonEvent,
};
use crate::levels::{
    calibrate_thresholds, DetectedAnomaly, LevelThresholds, Sensitivity,
};
use crate::signature::{
    compute_weekly_signature, DeviationModel, ServiceSet, WeeklySignature,
};
use crate::synth::SynthError;
use crate::telemetry::{
    filter_active_pairs, ActivityCube, CellId, CellRegistry, Minute, PairKey, PairSeries,
    TelemetryError, TimeSpan, MINUTES_PER_DAY,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("artifact {path}: {message}")]
    Artifact { path: String, message: String },
    #[error("config: {0}")]
    Config(String),
    #[error("missing input: {0}")]
    MissingInput(&'static str),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("model not found for cell {cell}, service {service}; run `train` first")]
    ModelNotFound { cell: String, service: String },
    #[error("no usable pairs after filtering and model fitting")]
    NoUsablePairs,
    #[error("fingerprint mismatch on {path}: artifact {found} vs config {expected}; pass --force to override")]
    FingerprintMismatch { path: String, found: String, expected: String },
}

impl PipelineError {
    pub fn kind(&self) -> &'static str {
        match self {
            PipelineError::Io { .. } => "io",
            PipelineError::Artifact { .. } => "artifact",
            PipelineError::Config(_) => "config",
            PipelineError::MissingInput(_) => "missing_input",
            PipelineError::Telemetry(_) => "telemetry",
            PipelineError::Synth(_) => "synth",
            PipelineError::Eval(_) => "eval",
            PipelineError::ModelNotFound { .. } => "model_not_found",
            PipelineError::NoUsablePairs => "no_usable_pairs",
            PipelineError::FingerprintMismatch { .. } => "fingerprint_mismatch",
        }
    }

    /// Machine-readable error document for the CLI.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({"error": {"kind": self.kind(), "message": self.to_string()}})
    }
}

/// Caps rayon parallelism from `URBANPULSE_THREADS` when set.
pub fn init_thread_pool_from_env() {
    if let Ok(value) = std::env::var("URBANPULSE_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

// ── Trained models ───────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignaturePairModel {
    pub signature: WeeklySignature,
    pub deviation: DeviationModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptivePairModel {
    pub forecaster: ForecastModel,
    pub chart: ChartParams,
    /// Chart state seeded from the trailing training residuals, warm for the
    /// minute `seeded_until`.
    pub seeded_state: AdaptiveChartState,
    pub seeded_until: Minute,
    /// Training z-score distribution; converts test z-scores into exceedance
    /// likelihoods for fusion.
    pub z_model: DeviationModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum PairModel {
    Signature(SignaturePairModel),
    Adaptive(AdaptivePairModel),
}

/// All fitted pair models of one run plus the fusion service universe.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub method: Method,
    /// Service names in fusion-index order.
    pub service_names: Vec<String>,
    pub pairs: BTreeMap<PairKey, PairModel>,
    /// Pairs demoted during fitting, with reasons.
    pub skipped: Vec<(PairKey, String)>,
}

/// Fused per-antenna scores: (minute, log-likelihood, contributing services).
pub type FusedScores = BTreeMap<CellId, Vec<(Minute, f64, ServiceSet)>>;

fn service_universe(cube: &ActivityCube, config: &RunConfig) -> Vec<String> {
    match &config.services {
        Some(list) => {
            let mut names = list.clone();
            names.sort();
            names.dedup();
            names
        }
        None => cube.services().iter().map(|s| s.as_str().to_string()).collect(),
    }
}

/// Splits training residuals at the warm-up boundary.
fn split_warmup(
    residuals: &[(Minute, f64)],
    start: Minute,
    warmup_days: i64,
) -> (Vec<f64>, Vec<(Minute, f64)>) {
    let cut = start + warmup_days * MINUTES_PER_DAY;
    let seed: Vec<f64> =
        residuals.iter().filter(|(t, _)| *t < cut).map(|(_, eps)| *eps).collect();
    let tail: Vec<(Minute, f64)> =
        residuals.iter().filter(|(t, _)| *t >= cut).cloned().collect();
    (seed, tail)
}

fn fit_signature_pair(
    series: &PairSeries,
    config: &RunConfig,
) -> Result<(PairModel, Vec<(Minute, f64)>), String> {
    let signature = compute_weekly_signature(series, &config.params.signature)
        .map_err(|e| e.to_string())?;
    let deviations: Vec<(Minute, f64)> = series
        .iter_present()
        .map(|(t, v)| (t, v as f64 - signature.predict(t)))
        .collect();
    let values: Vec<f64> = deviations.iter().map(|(_, eps)| *eps).collect();
    let deviation =
        DeviationModel::fit(&values, &config.params.tail).map_err(|e| e.to_string())?;
    let logliks = deviations
        .into_iter()
        .map(|(t, eps)| (t, deviation.log_survival(eps)))
        .collect();
    Ok((PairModel::Signature(SignaturePairModel { signature, deviation }), logliks))
}

fn fit_adaptive_pair(
    series: &PairSeries,
    train_span: TimeSpan,
    seed_before: Minute,
    holidays: &BTreeSet<i64>,
    config: &RunConfig,
) -> Result<(PairModel, Vec<(Minute, f64)>), String> {
    let forecaster = ForecastModel::fit(series, holidays, &config.params.forecast)
        .map_err(|e: AdaptiveError| e.to_string())?;
    let residuals = crate::adaptive::residual_series(&forecaster, series, holidays);
    if residuals.is_empty() {
        return Err("no training residuals".into());
    }

    let chart_cfg = &config.params.chart;
    let mean_rate = series.total() as f64 / series.present_count() as f64;
    let chart = ChartParams {
        tau_minutes: chart_cfg.tau_minutes,
        h: chart_cfg.h,
        sigma_floor: chart_cfg.sigma_floor_min.max(chart_cfg.sigma_floor_rel * mean_rate),
    };

    // Training pass: seed on the first warm-up window, then run the chart
    // with the no-update rule and collect z-scores for calibration.
    let (seed_values, tail) = split_warmup(&residuals, train_span.start, chart_cfg.warmup_days);
    if seed_values.is_empty() || tail.is_empty() {
        return Err(format!(
            "training span too short for a {}-day chart warm-up",
            chart_cfg.warmup_days
        ));
    }
    let mut state = AdaptiveChartState::seed(&chart, &seed_values);
    let mut zs: Vec<(Minute, f64)> = Vec::with_capacity(tail.len());
    let mut last: Option<Minute> = None;
    for (t, eps) in &tail {
        if let Some(prev) = last {
            let gap = *t - prev;
            if gap > 1 {
                state.decay(&chart, (gap - 1) as f64);
            }
        }
        let score = chart_step(&mut state, &chart, *eps);
        zs.push((*t, score.z));
        last = Some(*t);
    }

    let z_values: Vec<f64> = zs.iter().map(|(_, z)| *z).collect();
    let z_model =
        DeviationModel::fit(&z_values, &config.params.tail).map_err(|e| e.to_string())?;
    let logliks = zs.into_iter().map(|(t, z)| (t, z_model.log_survival(z))).collect();

    // Persisted chart state: the trailing warm-up window before the minute
    // the test run starts at, flagging disabled while seeding.
    let seed_from = seed_before + (-chart_cfg.warmup_days * MINUTES_PER_DAY);
    let seed_tail: Vec<f64> = residuals
        .iter()
        .filter(|(t, _)| *t < seed_before && *t >= seed_from)
        .map(|(_, eps)| *eps)
        .collect();
    if seed_tail.is_empty() {
        return Err("no residuals available to seed the detection chart".into());
    }
    let seeded_state = AdaptiveChartState::seed(&chart, &seed_tail);

    Ok((
        PairModel::Adaptive(AdaptivePairModel {
            forecaster,
            chart,
            seeded_state,
            seeded_until: seed_before,
            z_model,
        }),
        logliks,
    ))
}

/// Fuses per-pair log-likelihood series into per-antenna scores.
fn fuse_pair_logliks(
    per_pair: Vec<(PairKey, Vec<(Minute, f64)>)>,
    service_names: &[String],
) -> FusedScores {
    let mut by_cell: BTreeMap<CellId, Vec<(usize, Vec<(Minute, f64)>)>> = BTreeMap::new();
    for ((cell, service), logliks) in per_pair {
        let idx = service_names
            .iter()
            .position(|s| s == service.as_str())
            .expect("service in universe");
        by_cell.entry(cell).or_default().push((idx, logliks));
    }
    let fused: Vec<(CellId, Vec<(Minute, f64, ServiceSet)>)> = by_cell
        .into_par_iter()
        .map(|(cell, series_list)| {
            let mut merged: BTreeMap<Minute, (f64, ServiceSet)> = BTreeMap::new();
            for (idx, logliks) in series_list {
                for (t, loglik) in logliks {
                    let entry = merged.entry(t).or_insert((0.0, ServiceSet::default()));
                    entry.0 += loglik;
                    entry.1.insert(idx);
                }
            }
            let scores =
                merged.into_iter().map(|(t, (log, set))| (t, log, set)).collect::<Vec<_>>();
            (cell, scores)
        })
        .collect();
    fused.into_iter().collect()
}

/// Fits per-pair models on the training cube and returns them with the fused
/// training scores that feed threshold calibration.
///
/// `seed_before` names the minute the adaptive chart must be warm for
/// (defaults to the training span end); pass the test-interval start when
/// the test fold sits inside the span.
pub fn train_models(
    train: &ActivityCube,
    seed_before: Option<Minute>,
    config: &RunConfig,
) -> Result<(TrainedModels, FusedScores), PipelineError> {
    let service_names = service_universe(train, config);
    let active = filter_active_pairs(train, config.params.min_mean_rate);
    let holidays = config.holiday_days().map_err(PipelineError::Config)?;
    let seed_before = seed_before.unwrap_or(train.span().end);

    let keys: Vec<PairKey> = active
        .into_iter()
        .filter(|(_, service)| service_names.iter().any(|s| s == service.as_str()))
        .collect();

    let results: Vec<(PairKey, Result<(PairModel, Vec<(Minute, f64)>), String>)> = keys
        .into_par_iter()
        .map(|key| {
            let series = train.pair(&key).expect("active pair exists");
            let fitted = match config.method {
                Method::Signature => fit_signature_pair(series, config),
                Method::Adaptive => {
                    fit_adaptive_pair(series, train.span(), seed_before, &holidays, config)
                }
            };
            (key, fitted)
        })
        .collect();

    let mut pairs = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut per_pair = Vec::new();
    for (key, result) in results {
        match result {
            Ok((model, logliks)) => {
                pairs.insert(key.clone(), model);
                per_pair.push((key, logliks));
            }
            Err(reason) => skipped.push((key, reason)),
        }
    }
    per_pair.sort_by(|a, b| a.0.cmp(&b.0));
    skipped.sort_by(|a, b| a.0.cmp(&b.0));
    if pairs.is_empty() {
        return Err(PipelineError::NoUsablePairs);
    }

    let scores = fuse_pair_logliks(per_pair, &service_names);
    Ok((TrainedModels { method: config.method, service_names, pairs, skipped }, scores))
}

/// Scores a cube with fitted models: per-service exceedance likelihoods
/// fused per antenna-minute. Adaptive charts run sequentially within each
/// pair, starting from their persisted seeded state.
pub fn score_cube(models: &TrainedModels, cube: &ActivityCube) -> FusedScores {
    let mut per_pair: Vec<(PairKey, Vec<(Minute, f64)>)> = models
        .pairs
        .par_iter()
        .filter_map(|(key, model)| {
            let series = cube.pair(key)?;
            let logliks: Vec<(Minute, f64)> = match model {
                PairModel::Signature(m) => series
                    .iter_present()
                    .map(|(t, v)| (t, m.deviation.log_survival(v as f64 - m.signature.predict(t))))
                    .collect(),
                PairModel::Adaptive(m) => {
                    let mut state = m.seeded_state;
                    let mut last = m.seeded_until + (-1);
                    let mut out = Vec::with_capacity(series.present_count());
                    for (t, v) in series.iter_present() {
                        let gap = t - last;
                        if gap > 1 {
                            state.decay(&m.chart, (gap - 1) as f64);
                        }
                        let eps = v as f64 - m.forecaster.predict(t, false);
                        let score = chart_step(&mut state, &m.chart, eps);
                        out.push((t, m.z_model.log_survival(score.z)));
                        last = t;
                    }
                    out
                }
            };
            Some((key.clone(), logliks))
        })
        .collect();
    per_pair.sort_by(|a, b| a.0.cmp(&b.0));
    fuse_pair_logliks(per_pair, &models.service_names)
}

/// Calibrates per-antenna level thresholds from fused training scores.
pub fn calibrate(train_scores: &FusedScores, config: &RunConfig) -> LevelThresholds {
    let per_antenna: BTreeMap<CellId, Vec<f64>> = train_scores
        .iter()
        .map(|(cell, entries)| {
            (cell.clone(), entries.iter().map(|(_, log, _)| *log).collect())
        })
        .collect();
    calibrate_thresholds(&per_antenna, &config.params.calibration)
}

/// Scores the test cube and emits level ≥ 1 alarms, ordered by (minute, cell).
pub fn detect(
    models: &TrainedModels,
    thresholds: &LevelThresholds,
    test: &ActivityCube,
) -> Vec<DetectedAnomaly> {
    let scores = score_cube(models, test);
    let mut alarms: Vec<DetectedAnomaly> = scores
        .into_iter()
        .flat_map(|(cell, entries)| {
            let thresholds = thresholds.get(&cell).cloned();
            entries.into_iter().filter_map(move |(minute, log_score, services)| {
                let level = thresholds.as_ref().map_or(0, |t| t.level(log_score));
                (level >= 1).then(|| DetectedAnomaly {
                    cell: cell.clone(),
                    minute,
                    level,
                    log_score,
                    services,
                })
            })
        })
        .collect();
    alarms.sort_by(|a, b| (a.minute, &a.cell).cmp(&(b.minute, &b.cell)));
    alarms
}

/// Alarm antenna-minutes crossing one sensitivity's thresholds.
pub fn alarm_set_at(
    alarms: &[DetectedAnomaly],
    thresholds: &LevelThresholds,
    sensitivity: Sensitivity,
) -> BTreeSet<(CellId, Minute)> {
    alarms
        .iter()
        .filter(|a| {
            thresholds
                .get(&a.cell)
                .map_or(false, |t| t.crosses(a.log_score, sensitivity))
        })
        .map(|a| (a.cell.clone(), a.minute))
        .collect()
}

/// Evaluates an alarm stream against ground truth at one sensitivity.
pub fn evaluate(
    alarms: &[DetectedAnomaly],
    thresholds: &LevelThresholds,
    events: &[UncommonEvent],
    registry: &CellRegistry,
    span: TimeSpan,
    sensitivity: Sensitivity,
    config: &RunConfig,
) -> Result<(EvaluationReport, GroundTruthMask), PipelineError> {
    let mask = expand_ground_truth(events, registry, config.params.radius_default_m);
    let universe = EvalUniverse::new(registry.cell_ids().cloned().collect(), span);
    let set = alarm_set_at(alarms, thresholds, sensitivity);
    let report = score_alarm_set(
        &set,
        &mask,
        &universe,
        sensitivity.rate_per_minute(),
        &config.params.eval,
    )?;
    Ok((report, mask))
}

/// Evaluates all six sensitivities and assembles the PR curve.
pub fn pr_curve_points(
    alarms: &[DetectedAnomaly],
    thresholds: &LevelThresholds,
    events: &[UncommonEvent],
    registry: &CellRegistry,
    span: TimeSpan,
    config: &RunConfig,
    allow_partial: bool,
) -> Result<Vec<PrPoint>, PipelineError> {
    let mask = expand_ground_truth(events, registry, config.params.radius_default_m);
    let universe = EvalUniverse::new(registry.cell_ids().cloned().collect(), span);
    let mut reports: BTreeMap<Sensitivity, EvaluationReport> = BTreeMap::new();
    for sensitivity in Sensitivity::ALL {
        let available = thresholds
            .antennas
            .values()
            .any(|t| t.threshold(sensitivity).is_some());
        if !available {
            continue;
        }
        let set = alarm_set_at(alarms, thresholds, sensitivity);
        let report = score_alarm_set(
            &set,
            &mask,
            &universe,
            sensitivity.rate_per_minute(),
            &config.params.eval,
        )?;
        reports.insert(sensitivity, report);
    }
    Ok(pr_curve(&reports, allow_partial)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::GeoPoint;
    use crate::synth::{
        EventShape, EventSpec, GridSpec, NoiseSpec, Scenario, ServiceSpec, TrafficProfile,
    };

    fn small_scenario(weeks: u32, events: Vec<EventSpec>) -> Scenario {
        Scenario {
            name: "pipeline-test".into(),
            grid: GridSpec {
                rows: 2,
                cols: 3,
                spacing_m: 250.0,
                origin_lat: 48.85,
                origin_lon: 2.35,
            },
            services: vec![
                ServiceSpec { name: "call4g".into(), rate_scale: 1.0 },
                ServiceSpec { name: "sms4g".into(), rate_scale: 0.8 },
            ],
            weeks,
            start: "2019-03-18T00:00Z".into(),
            profile: TrafficProfile {
                base_rate: 20.0,
                daily_amplitude: 0.4,
                weekly_amplitude: 0.1,
                cell_scale_spread: 0.4,
                week_jitter_sigma: 0.02,
                noise: NoiseSpec::NegBinom { dispersion: 1.5 },
            },
            events,
            seed: 99,
        }
    }

    fn spike_event(onset: i64) -> EventSpec {
        EventSpec {
            id: "spike".into(),
            shape: EventShape::JumpDecay,
            magnitude: 8.0,
            epicenter: GeoPoint { lat: 48.85, lon: 2.35 },
            decay_radius_m: 150.0,
            onset_minute: onset,
            duration_min: 45,
            services: Default::default(),
            decay_time_constant_min: 30.0,
            radius_m: None,
            label: None,
        }
    }

    /// End-to-end in-memory run used by several assertions.
    fn run_method(method: Method) -> (Vec<DetectedAnomaly>, EvaluationReport) {
        let weeks = 4;
        let test_start_offset = 3 * crate::telemetry::MINUTES_PER_WEEK;
        let scenario = small_scenario(weeks, vec![spike_event(test_start_offset + 2000)]);
        let out = crate::synth::run_scenario(&scenario).unwrap();
        let span = out.cube.span();
        let test_span = TimeSpan::new(span.start + test_start_offset, span.end);

        let mut config = RunConfig::default();
        config.method = method;
        config.params.tail.min_sample = 5000;
        config.params.chart.warmup_days = 5;
        config.params.calibration.min_training_minutes = 5000;
        config.params.signature.min_training_weeks = 2;

        let train = out.cube.restrict(|t| !test_span.contains(t));
        let test = out.cube.window(test_span);
        let (models, train_scores) =
            train_models(&train, Some(test_span.start), &config).unwrap();
        assert!(models.pairs.len() >= 10, "most pairs should fit");
        let thresholds = calibrate(&train_scores, &config);
        let alarms = detect(&models, &thresholds, &test);
        let (report, _) = evaluate(
            &alarms,
            &thresholds,
            &out.events,
            &out.registry,
            test_span,
            Sensitivity::H4,
            &config,
        )
        .unwrap();
        (alarms, report)
    }

    #[test]
    fn signature_pipeline_detects_injected_spike() {
        let (alarms, report) = run_method(Method::Signature);
        assert!(!alarms.is_empty());
        assert_eq!(report.evaluated_events, 1);
        assert_eq!(report.recall_event, 1.0, "spike missed");
        let precision = report.precision.unwrap();
        assert!(
            precision > 5.0 * report.noskill_precision,
            "precision {precision} vs no-skill {}",
            report.noskill_precision
        );
    }

    #[test]
    fn adaptive_pipeline_detects_injected_spike() {
        let (alarms, report) = run_method(Method::Adaptive);
        assert!(!alarms.is_empty());
        assert_eq!(report.recall_event, 1.0, "spike missed");
    }

    #[test]
    fn no_level_zero_alarms_are_emitted() {
        let (alarms, _) = run_method(Method::Signature);
        assert!(alarms.iter().all(|a| a.level >= 1));
    }

    #[test]
    fn detect_emits_sorted_unique_antenna_minutes() {
        let (alarms, _) = run_method(Method::Signature);
        let mut seen = BTreeSet::new();
        let mut prev: Option<(Minute, CellId)> = None;
        for a in &alarms {
            assert!(seen.insert((a.cell.clone(), a.minute)), "duplicate alarm");
            if let Some((pm, pc)) = &prev {
                assert!((a.minute, &a.cell) >= (*pm, pc), "alarms not sorted");
            }
            prev = Some((a.minute, a.cell.clone()));
        }
    }
}
