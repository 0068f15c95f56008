//! File-based pipeline stages. Stages communicate only through on-disk
//! artifacts, so any stage can be re-run or audited in isolation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::artifacts::{
    json_artifact, json_fingerprint, model_dir, model_file_name, read_alarms_csv, read_json,
    read_train_scores_csv, thresholds_from_json, write_alarms_csv, write_atomic,
    write_json_artifact, write_train_scores_csv, ArtifactMeta, ModelDoc, FORMAT_VERSION,
};
use super::config::{Method, RunConfig};
use super::{
    calibrate, detect, evaluate, pr_curve_points, train_models, PairModel, PipelineError,
    TrainedModels,
};
use crate::eval::{alarms_to_geojson, dbue_to_json, load_dbue, pr_points_to_csv, UncommonEvent};
use crate::levels::LevelThresholds;
use crate::synth::{run_scenario, Scenario};
use crate::telemetry::{
    load_activity_csv, slice_folds, write_activity_csv, ActivityCube, CellRegistry, ColumnMap,
    FoldSpec, TimeSpan,
};

/// Canonical artifact locations inside one run's output directory.
#[derive(Debug, Clone)]
pub struct StagePaths {
    pub out_dir: PathBuf,
}

impl StagePaths {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        StagePaths { out_dir: out_dir.into() }
    }

    pub fn activity_csv(&self) -> PathBuf {
        self.out_dir.join("activity.csv")
    }
    pub fn cells_csv(&self) -> PathBuf {
        self.out_dir.join("cells.csv")
    }
    pub fn dbue_json(&self) -> PathBuf {
        self.out_dir.join("dbue.json")
    }
    pub fn models_dir(&self, method: Method) -> PathBuf {
        model_dir(&self.out_dir, method)
    }
    pub fn train_scores_csv(&self) -> PathBuf {
        self.out_dir.join("train_scores.csv")
    }
    pub fn thresholds_json(&self) -> PathBuf {
        self.out_dir.join("thresholds.json")
    }
    pub fn alarms_csv(&self) -> PathBuf {
        self.out_dir.join("alarms.csv")
    }
    pub fn report_json(&self) -> PathBuf {
        self.out_dir.join("report.json")
    }
    pub fn pr_curve_csv(&self) -> PathBuf {
        self.out_dir.join("pr_curve.csv")
    }
    pub fn map_geojson(&self) -> PathBuf {
        self.out_dir.join("alarms.geojson")
    }
}

fn check_fingerprint(
    path: &Path,
    found: Option<String>,
    config: &RunConfig,
    force: bool,
) -> Result<(), PipelineError> {
    if force {
        return Ok(());
    }
    if let Some(found) = found {
        let expected = config.fingerprint();
        if found != expected {
            return Err(PipelineError::FingerprintMismatch {
                path: path.display().to_string(),
                found,
                expected,
            });
        }
    }
    Ok(())
}

/// Loads the configured data cube and splits it into train/test.
///
/// With a fold config, one CSV is sliced into even contiguous folds; without
/// one, explicit train/test files are used (test may be absent for
/// train-only invocations).
pub fn resolve_train_test(
    config: &RunConfig,
) -> Result<(ActivityCube, Option<ActivityCube>), PipelineError> {
    let schema = ColumnMap::default();
    if let Some(fold) = config.fold {
        let data =
            config.inputs.data.as_ref().ok_or(PipelineError::MissingInput("inputs.data"))?;
        let cube = load_activity_csv(data, &schema)?;
        let spec = FoldSpec::even(cube.span(), fold.count)?;
        if fold.test_index >= fold.count {
            return Err(PipelineError::Config(format!(
                "fold test_index {} out of range for {} folds",
                fold.test_index, fold.count
            )));
        }
        let mut folds = slice_folds(&cube, &spec)?;
        let selected = folds.swap_remove(fold.test_index);
        Ok((selected.train, Some(selected.test)))
    } else {
        let train_path = config
            .inputs
            .train_data
            .as_ref()
            .or(config.inputs.data.as_ref())
            .ok_or(PipelineError::MissingInput("inputs.train_data or inputs.data"))?;
        let train = load_activity_csv(train_path, &schema)?;
        let test = match &config.inputs.test_data {
            Some(path) => Some(load_activity_csv(path, &schema)?),
            None => None,
        };
        Ok((train, test))
    }
}

fn require_test(config: &RunConfig) -> Result<(ActivityCube, TimeSpan), PipelineError> {
    let (_, test) = resolve_train_test(config)?;
    let test = test.ok_or(PipelineError::MissingInput("inputs.test_data (or fold)"))?;
    let span = test.span();
    Ok((test, span))
}

fn load_registry(config: &RunConfig, paths: &StagePaths) -> Result<CellRegistry, PipelineError> {
    let path = config.inputs.cells.clone().unwrap_or_else(|| paths.cells_csv());
    Ok(CellRegistry::load_csv(path)?)
}

fn load_events(
    config: &RunConfig,
    paths: &StagePaths,
) -> Result<(Vec<UncommonEvent>, Vec<serde_json::Value>), PipelineError> {
    let path = config.inputs.dbue.clone().unwrap_or_else(|| paths.dbue_json());
    let load = load_dbue(&path)?;
    let rejected = load
        .rejected
        .iter()
        .map(|r| serde_json::json!({"index": r.index, "reason": r.reason}))
        .collect();
    Ok((load.events, rejected))
}

// ── synth ────────────────────────────────────────────────────────────────

/// Scenario file → activity.csv + cells.csv + dbue.json.
pub fn stage_synth(config: &RunConfig, out_dir: &Path) -> Result<serde_json::Value, PipelineError> {
    let paths = StagePaths::new(out_dir);
    let scenario_path =
        config.inputs.scenario.as_ref().ok_or(PipelineError::MissingInput("inputs.scenario"))?;
    let text = fs::read_to_string(scenario_path).map_err(|source| PipelineError::Io {
        path: scenario_path.display().to_string(),
        source,
    })?;
    let mut scenario = Scenario::from_json(&text)?;
    // A non-zero config seed overrides the scenario's own.
    if config.seed != 0 {
        scenario.seed = config.seed;
    }
    let output = run_scenario(&scenario)?;

    let fingerprint = config.fingerprint();
    let span = output.cube.span();
    let meta = ArtifactMeta::new("activity", &fingerprint, Some(span));
    fs::create_dir_all(out_dir).map_err(|source| PipelineError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    write_activity_csv(&output.cube, paths.activity_csv(), &[meta.to_line()])?;
    let cells_meta = ArtifactMeta::new("cells", &fingerprint, None);
    output.registry.write_csv(paths.cells_csv(), &[cells_meta.to_line()])?;
    let dbue = json_artifact(
        "dbue",
        &fingerprint,
        serde_json::json!({"events": dbue_to_json(&output.events)}),
    );
    write_json_artifact(&paths.dbue_json(), &dbue)?;

    Ok(serde_json::json!({
        "stage": "synth",
        "scenario": scenario.name,
        "seed": scenario.seed,
        "span": span.to_string(),
        "cells": output.registry.len(),
        "events": output.events.len(),
        "observations": output.cube.observation_count(),
        "warnings": output.warnings,
        "outputs": [paths.activity_csv(), paths.cells_csv(), paths.dbue_json()],
    }))
}

// ── train ────────────────────────────────────────────────────────────────

/// Training data → per-pair model documents + fused training scores.
pub fn stage_train(config: &RunConfig, out_dir: &Path) -> Result<serde_json::Value, PipelineError> {
    let paths = StagePaths::new(out_dir);
    let (train, test) = resolve_train_test(config)?;
    let seed_before = test.as_ref().map(|t| t.span().start);
    let (models, scores) = train_models(&train, seed_before, config)?;

    let fingerprint = config.fingerprint();
    let dir = paths.models_dir(config.method);
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|source| PipelineError::Io {
            path: dir.display().to_string(),
            source,
        })?;
    }
    for ((cell, service), model) in &models.pairs {
        let doc = ModelDoc {
            format_version: FORMAT_VERSION,
            kind: "model".into(),
            fingerprint: fingerprint.clone(),
            method: config.method.label().into(),
            cell: cell.as_str().into(),
            service: service.as_str().into(),
            model: model.clone(),
        };
        let path = dir.join(model_file_name(cell.as_str(), service.as_str()));
        let mut text = serde_json::to_string(&doc).expect("model serializes");
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
    }

    let meta = ArtifactMeta::new("train_scores", &fingerprint, Some(train.span()));
    write_train_scores_csv(&paths.train_scores_csv(), &scores, &models.service_names, &meta)?;

    Ok(serde_json::json!({
        "stage": "train",
        "method": config.method.label(),
        "services": models.service_names,
        "pairs_fitted": models.pairs.len(),
        "pairs_skipped": models
            .skipped
            .iter()
            .map(|((c, s), reason)| serde_json::json!({
                "cell": c.as_str(), "service": s.as_str(), "reason": reason,
            }))
            .collect::<Vec<_>>(),
        "outputs": [dir, paths.train_scores_csv()],
    }))
}

fn load_models(
    config: &RunConfig,
    paths: &StagePaths,
    force: bool,
) -> Result<TrainedModels, PipelineError> {
    let dir = paths.models_dir(config.method);
    let mut pairs = BTreeMap::new();
    let mut service_names: Vec<String> = Vec::new();
    if dir.exists() {
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|source| PipelineError::Io { path: dir.display().to_string(), source })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "json"))
            .collect();
        entries.sort();
        for path in entries {
            let value = read_json(&path)?;
            check_fingerprint(&path, json_fingerprint(&value), config, force)?;
            let doc: ModelDoc<PairModel> =
                serde_json::from_value(value).map_err(|e| PipelineError::Artifact {
                    path: path.display().to_string(),
                    message: e.to_string(),
                })?;
            if doc.method != config.method.label() {
                return Err(PipelineError::Artifact {
                    path: path.display().to_string(),
                    message: format!(
                        "model method {} does not match configured {}",
                        doc.method,
                        config.method.label()
                    ),
                });
            }
            let cell = crate::telemetry::CellId::new(doc.cell.clone())
                .map_err(|m| PipelineError::Artifact { path: path.display().to_string(), message: m })?;
            let service = crate::telemetry::ServiceId::new(doc.service.clone())
                .map_err(|m| PipelineError::Artifact { path: path.display().to_string(), message: m })?;
            if !service_names.iter().any(|s| s == service.as_str()) {
                service_names.push(service.as_str().to_string());
            }
            pairs.insert((cell, service), doc.model);
        }
    }
    service_names.sort();
    Ok(TrainedModels { method: config.method, service_names, pairs, skipped: Vec::new() })
}

// ── calibrate ────────────────────────────────────────────────────────────

/// Training scores → per-antenna thresholds document.
pub fn stage_calibrate(
    config: &RunConfig,
    out_dir: &Path,
    force: bool,
) -> Result<serde_json::Value, PipelineError> {
    let paths = StagePaths::new(out_dir);
    let scores_path = paths.train_scores_csv();
    let (scores, meta) = read_train_scores_csv(&scores_path)?;
    check_fingerprint(&scores_path, meta.map(|m| m.fingerprint), config, force)?;

    let fused: super::FusedScores = scores
        .into_iter()
        .map(|(cell, values)| {
            (
                cell,
                values
                    .into_iter()
                    .map(|v| {
                        (crate::telemetry::Minute::new(0), v, crate::signature::ServiceSet::default())
                    })
                    .collect(),
            )
        })
        .collect();
    let thresholds = calibrate(&fused, config);

    // The fusion service universe travels with the thresholds so later
    // stages can decode alarm streams without the models.
    let models = load_models(config, &paths, true).ok();
    let services = models.map(|m| m.service_names).unwrap_or_default();
    let doc = json_artifact(
        "thresholds",
        &config.fingerprint(),
        serde_json::json!({
            "method": config.method.label(),
            "services": services,
            "antennas": serde_json::to_value(&thresholds.antennas).expect("thresholds serialize"),
        }),
    );
    write_json_artifact(&paths.thresholds_json(), &doc)?;

    Ok(serde_json::json!({
        "stage": "calibrate",
        "antennas_calibrated": thresholds.antennas.len(),
        "outputs": [paths.thresholds_json()],
    }))
}

fn load_thresholds(
    config: &RunConfig,
    paths: &StagePaths,
    force: bool,
) -> Result<(LevelThresholds, Vec<String>), PipelineError> {
    let path = paths.thresholds_json();
    let value = read_json(&path)?;
    check_fingerprint(&path, json_fingerprint(&value), config, force)?;
    let thresholds = thresholds_from_json(&value)?;
    let services: Vec<String> = value
        .get("services")
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default();
    Ok((thresholds, services))
}

// ── detect ───────────────────────────────────────────────────────────────

/// Models + thresholds + test data → alarm stream CSV.
pub fn stage_detect(
    config: &RunConfig,
    out_dir: &Path,
    force: bool,
) -> Result<serde_json::Value, PipelineError> {
    let paths = StagePaths::new(out_dir);
    let (test, test_span) = require_test(config)?;
    let models = load_models(config, &paths, force)?;
    if models.pairs.is_empty() {
        // Name the first pair the run would have needed.
        let (cell, service) = test
            .pairs()
            .next()
            .map(|(k, _)| (k.0.as_str().to_string(), k.1.as_str().to_string()))
            .unwrap_or_else(|| ("<none>".into(), "<none>".into()));
        return Err(PipelineError::ModelNotFound { cell, service });
    }
    let (thresholds, _) = load_thresholds(config, &paths, force)?;

    let alarms = detect(&models, &thresholds, &test);
    let meta = ArtifactMeta::new("alarms", &config.fingerprint(), Some(test_span));
    write_alarms_csv(&paths.alarms_csv(), &alarms, &models.service_names, &meta)?;

    let mut by_level = [0usize; 4];
    for a in &alarms {
        by_level[a.level as usize] += 1;
    }
    Ok(serde_json::json!({
        "stage": "detect",
        "method": config.method.label(),
        "test_span": test_span.to_string(),
        "alarms": alarms.len(),
        "level_1": by_level[1],
        "level_2": by_level[2],
        "level_3": by_level[3],
        "outputs": [paths.alarms_csv()],
    }))
}

fn load_alarm_stream(
    config: &RunConfig,
    paths: &StagePaths,
    services: &[String],
    force: bool,
) -> Result<(Vec<crate::levels::DetectedAnomaly>, TimeSpan), PipelineError> {
    let path = paths.alarms_csv();
    let (alarms, meta) = read_alarms_csv(&path, services)?;
    let meta = meta.ok_or_else(|| PipelineError::Artifact {
        path: path.display().to_string(),
        message: "alarm stream is missing its artifact header".into(),
    })?;
    check_fingerprint(&path, Some(meta.fingerprint.clone()), config, force)?;
    let span = meta.span.ok_or_else(|| PipelineError::Artifact {
        path: path.display().to_string(),
        message: "alarm stream header lacks the evaluated span".into(),
    })?;
    Ok((alarms, span))
}

// ── evaluate ─────────────────────────────────────────────────────────────

/// Alarms + DBUE + registry → report document at the configured sensitivity.
pub fn stage_evaluate(
    config: &RunConfig,
    out_dir: &Path,
    force: bool,
) -> Result<serde_json::Value, PipelineError> {
    let paths = StagePaths::new(out_dir);
    let (thresholds, services) = load_thresholds(config, &paths, force)?;
    let (alarms, span) = load_alarm_stream(config, &paths, &services, force)?;
    let registry = load_registry(config, &paths)?;
    let (events, rejected) = load_events(config, &paths)?;

    let (report, mask) = evaluate(
        &alarms,
        &thresholds,
        &events,
        &registry,
        span,
        config.sensitivity,
        config,
    )?;

    let doc = json_artifact(
        "report",
        &config.fingerprint(),
        serde_json::json!({
            "method": config.method.label(),
            "sensitivity": config.sensitivity.label(),
            "span": span.to_string(),
            "config": config.to_json_value(),
            "report": serde_json::to_value(&report).expect("report serializes"),
            "ground_truth_events": mask.events.len(),
            "dbue_rejected": rejected,
        }),
    );
    write_json_artifact(&paths.report_json(), &doc)?;

    Ok(serde_json::json!({
        "stage": "evaluate",
        "sensitivity": config.sensitivity.label(),
        "precision": report.precision,
        "recall_minute": report.recall_minute,
        "recall_event": report.recall_event,
        "outputs": [paths.report_json()],
    }))
}

// ── pr-curve ─────────────────────────────────────────────────────────────

/// Alarms + DBUE + registry → 6-point PR curve CSV.
pub fn stage_pr_curve(
    config: &RunConfig,
    out_dir: &Path,
    force: bool,
    allow_partial: bool,
) -> Result<serde_json::Value, PipelineError> {
    let paths = StagePaths::new(out_dir);
    let (thresholds, services) = load_thresholds(config, &paths, force)?;
    let (alarms, span) = load_alarm_stream(config, &paths, &services, force)?;
    let registry = load_registry(config, &paths)?;
    let (events, _) = load_events(config, &paths)?;

    let points = pr_curve_points(
        &alarms,
        &thresholds,
        &events,
        &registry,
        span,
        config,
        allow_partial,
    )?;
    let meta = ArtifactMeta::new("pr_curve", &config.fingerprint(), Some(span));
    let csv = pr_points_to_csv(&points, &[meta.to_line()]);
    write_atomic(&paths.pr_curve_csv(), csv.as_bytes())?;

    Ok(serde_json::json!({
        "stage": "pr-curve",
        "points": points.len(),
        "outputs": [paths.pr_curve_csv()],
    }))
}

// ── export-map ───────────────────────────────────────────────────────────

/// Alarms + registry → GeoJSON FeatureCollection.
pub fn stage_export_map(
    config: &RunConfig,
    out_dir: &Path,
    force: bool,
) -> Result<serde_json::Value, PipelineError> {
    let paths = StagePaths::new(out_dir);
    let (_, services) = load_thresholds(config, &paths, force)?;
    let (alarms, _) = load_alarm_stream(config, &paths, &services, force)?;
    let registry = load_registry(config, &paths)?;

    let mut geojson = alarms_to_geojson(&alarms, &registry, &services);
    if let serde_json::Value::Object(obj) = &mut geojson {
        obj.insert("fingerprint".into(), config.fingerprint().into());
    }
    write_json_artifact(&paths.map_geojson(), &geojson)?;

    Ok(serde_json::json!({
        "stage": "export-map",
        "features": alarms.len(),
        "outputs": [paths.map_geojson()],
    }))
}
