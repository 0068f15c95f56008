//! Evaluation harness: DBUE ground truth, spatio-temporal matching of
//! detected anomalies to uncommon events, confusion counts, precision and
//! recall at minute and event granularity, no-skill baselines and PR curves.

mod dbue;
mod geo;

pub use dbue::{
    dbue_to_json, load_dbue, parse_dbue, DailyWindow, DbueLoad, GeoPoint, RejectedRecord,
    UncommonEvent, DEFAULT_DETECTION_WINDOW_MIN,
};
pub use geo::haversine_m;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::levels::{DetectedAnomaly, Sensitivity};
use crate::telemetry::{CellId, CellRegistry, Minute, TimeSpan};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dbue schema: {0}")]
    Schema(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("pr curve is missing sensitivities {missing:?}; pass allow_partial to emit anyway")]
    PartialCurve { missing: Vec<String> },
    #[error("evaluation universe is empty")]
    EmptyUniverse,
}

/// Antenna-minutes covered by one event after tolerance expansion.
#[derive(Debug, Clone, PartialEq)]
pub struct EventMask {
    pub event_id: String,
    /// Inclusive minute windows, one per day for recurring events.
    pub windows: Vec<(Minute, Minute)>,
    pub cells: BTreeSet<CellId>,
    pub pairs: BTreeSet<(CellId, Minute)>,
}

/// Ground-truth mask: per-event sub-masks plus their union (GT⁺).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthMask {
    pub events: Vec<EventMask>,
    pub union: BTreeSet<(CellId, Minute)>,
    /// Events with zero in-range antennas.
    pub undetectable: Vec<String>,
}

/// Expands events into antenna-minute masks: for each event, every antenna
/// within `radius_m` (haversine, inclusive) of any epicenter, crossed with
/// the event's detection windows.
pub fn expand_ground_truth(
    events: &[UncommonEvent],
    registry: &CellRegistry,
    default_radius_m: f64,
) -> GroundTruthMask {
    let mut mask = GroundTruthMask::default();
    for event in events {
        let radius = event.radius_m.unwrap_or(default_radius_m);
        let cells: BTreeSet<CellId> = registry
            .iter()
            .filter(|(_, info)| {
                event
                    .epicenters
                    .iter()
                    .any(|p| haversine_m(p.lat, p.lon, info.lat, info.lon) <= radius)
            })
            .map(|(cell, _)| cell.clone())
            .collect();
        if cells.is_empty() {
            mask.undetectable.push(event.id.clone());
        }
        let windows = event.windows();
        let mut pairs = BTreeSet::new();
        for cell in &cells {
            for &(first, last) in &windows {
                for t in first.value()..=last.value() {
                    pairs.insert((cell.clone(), Minute::new(t)));
                }
            }
        }
        mask.union.extend(pairs.iter().cloned());
        mask.events.push(EventMask { event_id: event.id.clone(), windows, cells, pairs });
    }
    mask
}

/// The evaluated antenna-minute grid: every registry cell crossed with the
/// test span.
#[derive(Debug, Clone)]
pub struct EvalUniverse {
    pub cells: BTreeSet<CellId>,
    pub span: TimeSpan,
}

impl EvalUniverse {
    pub fn new(cells: BTreeSet<CellId>, span: TimeSpan) -> Self {
        EvalUniverse { cells, span }
    }

    pub fn total_antenna_minutes(&self) -> u64 {
        self.cells.len() as u64 * self.span.len() as u64
    }

    fn contains(&self, cell: &CellId, t: Minute) -> bool {
        self.span.contains(t) && self.cells.contains(cell)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalParams {
    /// Alarms per event required for event-wise detection (n = 1 by default).
    pub alarms_per_event: usize,
    /// Drop events with zero in-range antennas from the event-recall
    /// denominator (diagnostic mode; default keeps them as misses).
    pub exclude_undetectable: bool,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams { alarms_per_event: 1, exclude_undetectable: false }
    }
}

/// Confusion counts and derived indicators for one run at one sensitivity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub true_positives: u64,
    pub false_positives: u64,
    pub false_negatives: u64,
    pub true_negatives: u64,
    /// None when the run produced no alarms.
    pub precision: Option<f64>,
    pub recall_minute: f64,
    pub recall_event: f64,
    pub detected_events: Vec<String>,
    pub evaluated_events: usize,
    pub undetectable_events: Vec<String>,
    pub noskill_precision: f64,
    pub noskill_recall: f64,
    pub alarm_count: u64,
    pub ground_truth_minutes: u64,
    pub total_antenna_minutes: u64,
}

/// Scores a set of alarm antenna-minutes against the ground truth.
///
/// TP = alarms inside GT⁺, FP = alarms outside, FN = GT⁺ minutes without an
/// alarm, TN = the rest of the evaluated grid. Event recall counts events
/// whose sub-mask contains at least `alarms_per_event` alarms; overlapping
/// events share alarms without double-counting the confusion cells.
pub fn score_alarm_set(
    alarms: &BTreeSet<(CellId, Minute)>,
    mask: &GroundTruthMask,
    universe: &EvalUniverse,
    noskill_rate: f64,
    params: &EvalParams,
) -> Result<EvaluationReport, EvalError> {
    let total = universe.total_antenna_minutes();
    if total == 0 {
        return Err(EvalError::EmptyUniverse);
    }
    let in_universe: BTreeSet<&(CellId, Minute)> =
        alarms.iter().filter(|(c, t)| universe.contains(c, *t)).collect();
    let gt: BTreeSet<&(CellId, Minute)> =
        mask.union.iter().filter(|(c, t)| universe.contains(c, *t)).collect();

    let tp = in_universe.iter().filter(|p| gt.contains(**p)).count() as u64;
    let fp = in_universe.len() as u64 - tp;
    let fn_ = gt.len() as u64 - tp;
    let tn = total - tp - fp - fn_;

    let mut detected = Vec::new();
    let mut evaluated = 0usize;
    for event in &mask.events {
        if params.exclude_undetectable && event.cells.is_empty() {
            continue;
        }
        // Events entirely outside the evaluated span are not evaluable here.
        let in_span = event
            .windows
            .iter()
            .any(|&(first, last)| first < universe.span.end && last >= universe.span.start);
        if !in_span {
            continue;
        }
        evaluated += 1;
        let hits = event
            .pairs
            .iter()
            .filter(|(c, t)| universe.contains(c, *t) && alarms.contains(&(c.clone(), *t)))
            .count();
        if hits >= params.alarms_per_event {
            detected.push(event.event_id.clone());
        }
    }

    let noskill = noskill_baselines(gt.len() as u64, total, noskill_rate);
    Ok(EvaluationReport {
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        precision: (tp + fp > 0).then(|| tp as f64 / (tp + fp) as f64),
        recall_minute: if tp + fn_ > 0 { tp as f64 / (tp + fn_) as f64 } else { 0.0 },
        recall_event: if evaluated > 0 { detected.len() as f64 / evaluated as f64 } else { 0.0 },
        detected_events: detected,
        evaluated_events: evaluated,
        undetectable_events: mask.undetectable.clone(),
        noskill_precision: noskill.0,
        noskill_recall: noskill.1,
        alarm_count: in_universe.len() as u64,
        ground_truth_minutes: gt.len() as u64,
        total_antenna_minutes: total,
    })
}

/// Scores a detected-anomaly stream at a minimum level.
pub fn score_run(
    alarms: &[DetectedAnomaly],
    min_level: u8,
    mask: &GroundTruthMask,
    universe: &EvalUniverse,
    noskill_rate: f64,
    params: &EvalParams,
) -> Result<EvaluationReport, EvalError> {
    let set: BTreeSet<(CellId, Minute)> = alarms
        .iter()
        .filter(|a| a.level >= min_level)
        .map(|a| (a.cell.clone(), a.minute))
        .collect();
    score_alarm_set(&set, mask, universe, noskill_rate, params)
}

/// Closed-form baselines of a detector alarming uniformly at random with
/// frequency `rate`: precision = |GT⁺|/𝒯, recall = rate.
pub fn noskill_baselines(ground_truth_minutes: u64, total_minutes: u64, rate: f64) -> (f64, f64) {
    assert!(total_minutes > 0, "no-skill baseline needs a non-empty period");
    (ground_truth_minutes as f64 / total_minutes as f64, rate)
}

/// Minutes from `event_start` to the first alarm inside the event's
/// sub-mask; `None` when the event received no alarm.
pub fn detection_latency(
    event_mask: &EventMask,
    event_start: Minute,
    alarms: &BTreeSet<(CellId, Minute)>,
) -> Option<i64> {
    event_mask
        .pairs
        .iter()
        .filter(|pair| alarms.contains(*pair))
        .map(|(_, t)| *t - event_start)
        .min()
}

/// One PR point per sensitivity, ordered most-frequent first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub sensitivity: Sensitivity,
    pub precision: Option<f64>,
    pub recall_minute: f64,
    pub recall_event: f64,
}

/// Assembles a PR curve from per-sensitivity reports. Refuses to emit a
/// partial curve unless `allow_partial` is set.
pub fn pr_curve(
    reports: &BTreeMap<Sensitivity, EvaluationReport>,
    allow_partial: bool,
) -> Result<Vec<PrPoint>, EvalError> {
    let missing: Vec<String> = Sensitivity::ALL
        .into_iter()
        .filter(|s| !reports.contains_key(s))
        .map(|s| s.label().to_string())
        .collect();
    if !missing.is_empty() && !allow_partial {
        return Err(EvalError::PartialCurve { missing });
    }
    Ok(Sensitivity::ALL
        .into_iter()
        .filter_map(|s| {
            reports.get(&s).map(|r| PrPoint {
                sensitivity: s,
                precision: r.precision,
                recall_minute: r.recall_minute,
                recall_event: r.recall_event,
            })
        })
        .collect())
}

/// PR-point CSV: `sensitivity,precision,recall_minute,recall_event`, empty
/// precision for alarm-free runs.
pub fn pr_points_to_csv(points: &[PrPoint], meta_lines: &[String]) -> String {
    let mut out = String::new();
    for line in meta_lines {
        out.push_str(&format!("# {line}\n"));
    }
    out.push_str("sensitivity,precision,recall_minute,recall_event\n");
    for p in points {
        let precision = p.precision.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{}\n",
            p.sensitivity.label(),
            precision,
            p.recall_minute,
            p.recall_event
        ));
    }
    out
}

/// GeoJSON FeatureCollection of alarms (point per alarm, level/time/score
/// properties) for map rendering.
pub fn alarms_to_geojson(
    alarms: &[DetectedAnomaly],
    registry: &CellRegistry,
    service_names: &[String],
) -> serde_json::Value {
    let features: Vec<serde_json::Value> = alarms
        .iter()
        .filter_map(|a| {
            let info = registry.get(&a.cell)?;
            let services: Vec<&str> = a
                .services
                .iter()
                .filter_map(|i| service_names.get(i).map(|s| s.as_str()))
                .collect();
            Some(serde_json::json!({
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [info.lon, info.lat]},
                "properties": {
                    "cell_id": a.cell.as_str(),
                    "minute": a.minute.to_string(),
                    "level": a.level,
                    "score": a.log_score.exp(),
                    "services": services.join("+"),
                },
            }))
        })
        .collect();
    serde_json::json!({"type": "FeatureCollection", "features": features})
}
