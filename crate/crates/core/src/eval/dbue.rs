//! The reference database of uncommon events (DBUE).
//!
//! File format: a JSON array of event records (optionally wrapped in an
//! object with an `events` field). Each record:
//!
//! ```json
//! {
//!   "id": "ue-0001",
//!   "label": "concert",
//!   "epicenters": [{"lat": 48.8529, "lon": 2.3499}],
//!   "start": "2019-04-15T18:52Z",
//!   "end": "2019-04-15T23:00Z",
//!   "days": [{"date": "2019-05-01", "start_time": "10:00", "end_time": "20:00"}],
//!   "radius_m": 300.0,
//!   "pre_buffer_min": 30,
//!   "post_buffer_min": 30,
//!   "detection_window_min": 15,
//!   "description": "…",
//!   "sources": ["https://…"]
//! }
//! ```
//!
//! `end`, `days`, buffers, radius and descriptive fields are optional.
//! Records that violate the schema are rejected individually with a reason;
//! the rest of the file still loads.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::telemetry::{Minute, TimeSpan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

/// One recurring daily window of a multi-day event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DailyWindow {
    /// First minute of the date (UTC midnight).
    pub date: Minute,
    /// Window start/end as minutes of that day, end inclusive-exclusive
    /// handled by the mask expansion.
    pub start_minute_of_day: u32,
    pub end_minute_of_day: u32,
}

/// A validated ground-truth event.
#[derive(Debug, Clone, PartialEq)]
pub struct UncommonEvent {
    pub id: String,
    pub label: Option<String>,
    pub epicenters: Vec<GeoPoint>,
    pub start: Minute,
    pub end: Option<Minute>,
    pub days: Vec<DailyWindow>,
    pub radius_m: Option<f64>,
    pub pre_buffer_min: i64,
    pub post_buffer_min: i64,
    pub detection_window_min: i64,
    pub description: Option<String>,
    pub sources: Vec<String>,
}

impl UncommonEvent {
    /// Inclusive detection windows `[first, last]`, buffers applied.
    ///
    /// Multi-day events contribute one window per listed day; an event with
    /// an end uses `[start − pre, end + post]`; an event with only a start
    /// uses the detection window: alarms count up to
    /// `detection_window_min` minutes after the beginning.
    pub fn windows(&self) -> Vec<(Minute, Minute)> {
        if !self.days.is_empty() {
            return self
                .days
                .iter()
                .map(|d| {
                    (
                        d.date + (d.start_minute_of_day as i64 - self.pre_buffer_min),
                        d.date + (d.end_minute_of_day as i64 + self.post_buffer_min),
                    )
                })
                .collect();
        }
        let first = self.start + (-self.pre_buffer_min);
        let last = match self.end {
            Some(end) => end + self.post_buffer_min,
            None => self.start + self.detection_window_min + self.post_buffer_min,
        };
        vec![(first, last)]
    }

    /// True when any detection window intersects `span`.
    pub fn intersects(&self, span: TimeSpan) -> bool {
        self.windows()
            .iter()
            .any(|&(first, last)| first < span.end && last >= span.start)
    }
}

/// Raw serde image of one record; validation happens in `validate`.
#[derive(Debug, Deserialize)]
struct RawEvent {
    id: Option<String>,
    label: Option<String>,
    #[serde(default)]
    epicenters: Vec<GeoPoint>,
    start: Option<String>,
    end: Option<String>,
    #[serde(default)]
    days: Vec<RawDay>,
    radius_m: Option<f64>,
    pre_buffer_min: Option<i64>,
    post_buffer_min: Option<i64>,
    detection_window_min: Option<i64>,
    description: Option<String>,
    #[serde(default)]
    sources: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct RawDay {
    date: String,
    start_time: String,
    end_time: String,
}

pub const DEFAULT_DETECTION_WINDOW_MIN: i64 = 15;

fn parse_time_of_day(text: &str) -> Result<u32, String> {
    let (h, m) = text
        .split_once(':')
        .ok_or_else(|| format!("invalid time of day {text:?}"))?;
    let h: u32 = h.parse().map_err(|_| format!("invalid hour in {text:?}"))?;
    let m: u32 = m.parse().map_err(|_| format!("invalid minute in {text:?}"))?;
    if h > 23 || m > 59 {
        return Err(format!("time of day {text:?} out of range"));
    }
    Ok(h * 60 + m)
}

fn validate(raw: RawEvent, index: usize) -> Result<UncommonEvent, String> {
    let id = match raw.id {
        Some(id) if !id.is_empty() => id,
        _ => format!("record #{index}"),
    };
    if raw.epicenters.is_empty() {
        return Err(format!("{id}: missing epicenter"));
    }
    for p in &raw.epicenters {
        if !(-90.0..=90.0).contains(&p.lat) || !(-180.0..=180.0).contains(&p.lon) {
            return Err(format!("{id}: epicenter ({}, {}) out of range", p.lat, p.lon));
        }
    }
    let start = match raw.start {
        Some(ref s) => Minute::parse(s).map_err(|e| format!("{id}: {e}"))?,
        None => return Err(format!("{id}: missing start")),
    };
    let end = match raw.end {
        Some(ref s) => {
            let end = Minute::parse(s).map_err(|e| format!("{id}: {e}"))?;
            if end < start {
                return Err(format!("{id}: end {end} before start {start}"));
            }
            Some(end)
        }
        None => None,
    };
    if let Some(r) = raw.radius_m {
        if !(r > 0.0) {
            return Err(format!("{id}: radius_m must be > 0, got {r}"));
        }
    }
    let mut days = Vec::new();
    for d in &raw.days {
        let date = Minute::parse_date(&d.date).map_err(|e| format!("{id}: {e}"))?;
        let start_minute = parse_time_of_day(&d.start_time).map_err(|e| format!("{id}: {e}"))?;
        let end_minute = parse_time_of_day(&d.end_time).map_err(|e| format!("{id}: {e}"))?;
        if end_minute < start_minute {
            return Err(format!("{id}: day window ends before it starts on {}", d.date));
        }
        days.push(DailyWindow {
            date,
            start_minute_of_day: start_minute,
            end_minute_of_day: end_minute,
        });
    }
    Ok(UncommonEvent {
        id,
        label: raw.label,
        epicenters: raw.epicenters,
        start,
        end,
        days,
        radius_m: raw.radius_m,
        pre_buffer_min: raw.pre_buffer_min.unwrap_or(0),
        post_buffer_min: raw.post_buffer_min.unwrap_or(0),
        detection_window_min: raw.detection_window_min.unwrap_or(DEFAULT_DETECTION_WINDOW_MIN),
        description: raw.description,
        sources: raw.sources,
    })
}

/// A rejected record and why.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRecord {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug)]
pub struct DbueLoad {
    pub events: Vec<UncommonEvent>,
    pub rejected: Vec<RejectedRecord>,
}

/// Parses DBUE records from a JSON string.
pub fn parse_dbue(json: &str) -> Result<DbueLoad, EvalError> {
    let value: serde_json::Value =
        serde_json::from_str(json).map_err(|e| EvalError::Schema(e.to_string()))?;
    let records = match &value {
        serde_json::Value::Array(items) => items.clone(),
        serde_json::Value::Object(map) => match map.get("events") {
            Some(serde_json::Value::Array(items)) => items.clone(),
            _ => return Err(EvalError::Schema("expected an array or {\"events\": […]}".into())),
        },
        _ => return Err(EvalError::Schema("expected an array or {\"events\": […]}".into())),
    };
    let mut events = Vec::new();
    let mut rejected = Vec::new();
    for (index, record) in records.into_iter().enumerate() {
        let raw: RawEvent = match serde_json::from_value(record) {
            Ok(raw) => raw,
            Err(e) => {
                rejected.push(RejectedRecord { index, reason: e.to_string() });
                continue;
            }
        };
        match validate(raw, index) {
            Ok(event) => events.push(event),
            Err(reason) => rejected.push(RejectedRecord { index, reason }),
        }
    }
    Ok(DbueLoad { events, rejected })
}

/// Loads and validates a DBUE file; schema violations are reported per
/// record, not fatal.
pub fn load_dbue(path: impl AsRef<Path>) -> Result<DbueLoad, EvalError> {
    let path = path.as_ref();
    let json = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dbue(&json)
}

/// Serializes events to the canonical JSON array with ISO timestamps.
pub fn dbue_to_json(events: &[UncommonEvent]) -> serde_json::Value {
    let records: Vec<serde_json::Value> = events
        .iter()
        .map(|e| {
            let mut obj = serde_json::Map::new();
            obj.insert("id".into(), e.id.clone().into());
            if let Some(label) = &e.label {
                obj.insert("label".into(), label.clone().into());
            }
            obj.insert(
                "epicenters".into(),
                serde_json::to_value(&e.epicenters).expect("points serialize"),
            );
            obj.insert("start".into(), e.start.to_string().into());
            if let Some(end) = e.end {
                obj.insert("end".into(), end.to_string().into());
            }
            if !e.days.is_empty() {
                let days: Vec<serde_json::Value> = e
                    .days
                    .iter()
                    .map(|d| {
                        serde_json::json!({
                            "date": d.date.to_date_string(),
                            "start_time": format_time_of_day(d.start_minute_of_day),
                            "end_time": format_time_of_day(d.end_minute_of_day),
                        })
                    })
                    .collect();
                obj.insert("days".into(), days.into());
            }
            if let Some(r) = e.radius_m {
                obj.insert("radius_m".into(), r.into());
            }
            if e.pre_buffer_min != 0 {
                obj.insert("pre_buffer_min".into(), e.pre_buffer_min.into());
            }
            if e.post_buffer_min != 0 {
                obj.insert("post_buffer_min".into(), e.post_buffer_min.into());
            }
            if e.detection_window_min != DEFAULT_DETECTION_WINDOW_MIN {
                obj.insert("detection_window_min".into(), e.detection_window_min.into());
            }
            if let Some(d) = &e.description {
                obj.insert("description".into(), d.clone().into());
            }
            if !e.sources.is_empty() {
                obj.insert("sources".into(), serde_json::to_value(&e.sources).expect("urls"));
            }
            serde_json::Value::Object(obj)
        })
        .collect();
    serde_json::Value::Array(records)
}

fn format_time_of_day(minute_of_day: u32) -> String {
    format!("{:02}:{:02}", minute_of_day / 60, minute_of_day % 60)
}
