//! On-disk artifact formats.
//!
//! Every artifact is stamped with the run-config fingerprint: CSV files carry
//! a leading `# urbanpulse …` comment line, JSON files a `fingerprint` field.
//! Writes go through a temp file and rename, so failed stages leave no
//! partial outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::Method;
use super::PipelineError;
use crate::levels::{DetectedAnomaly, LevelThresholds};
use crate::signature::ServiceSet;
use crate::telemetry::{CellId, Minute, TimeSpan};

pub const FORMAT_VERSION: u32 = 1;

/// Metadata stamped on CSV artifacts as the first line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactMeta {
    pub kind: String,
    pub fingerprint: String,
    pub span: Option<TimeSpan>,
}

impl ArtifactMeta {
    pub fn new(kind: &str, fingerprint: &str, span: Option<TimeSpan>) -> Self {
        ArtifactMeta { kind: kind.into(), fingerprint: fingerprint.into(), span }
    }

    pub fn to_line(&self) -> String {
        let mut line = format!("urbanpulse v{FORMAT_VERSION} kind={} fingerprint={}", self.kind, self.fingerprint);
        if let Some(span) = self.span {
            line.push_str(&format!(" span={span}"));
        }
        line
    }

    /// Parses the first line of a file when it is an artifact header.
    pub fn parse_header(content: &str) -> Option<ArtifactMeta> {
        let line = content.lines().next()?;
        let line = line.strip_prefix('#')?.trim();
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for token in line.split_whitespace() {
            if let Some((k, v)) = token.split_once('=') {
                fields.insert(k, v);
            }
        }
        Some(ArtifactMeta {
            kind: fields.get("kind")?.to_string(),
            fingerprint: fields.get("fingerprint")?.to_string(),
            span: fields.get("span").and_then(|s| TimeSpan::parse(s).ok()),
        })
    }

    pub fn read_from(path: &Path) -> Result<Option<ArtifactMeta>, PipelineError> {
        let content = read_prefix(path, 4096)?;
        Ok(Self::parse_header(&content))
    }
}

fn read_prefix(path: &Path, bytes: usize) -> Result<String, PipelineError> {
    use std::io::Read;
    let mut file = fs::File::open(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut buf = vec![0u8; bytes];
    let mut read = 0;
    while read < bytes {
        match file.read(&mut buf[read..]) {
            Ok(0) => break,
            Ok(n) => read += n,
            Err(source) => {
                return Err(PipelineError::Io { path: path.display().to_string(), source })
            }
        }
    }
    buf.truncate(read);
    Ok(String::from_utf8_lossy(&buf).into_owned())
}

/// Writes a file atomically: content lands under a temp name and is renamed
/// into place only on success.
pub fn write_atomic(path: &Path, content: &[u8]) -> Result<(), PipelineError> {
    let io_err = |source| PipelineError::Io { path: path.display().to_string(), source };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err)?;
    }
    let tmp = path.with_extension("tmp");
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(content)?;
        f.flush()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result.map_err(io_err)
}

/// Wraps a JSON payload with version and fingerprint fields.
pub fn json_artifact(kind: &str, fingerprint: &str, fields: serde_json::Value) -> serde_json::Value {
    let mut obj = serde_json::Map::new();
    obj.insert("format_version".into(), FORMAT_VERSION.into());
    obj.insert("kind".into(), kind.into());
    obj.insert("fingerprint".into(), fingerprint.into());
    if let serde_json::Value::Object(fields) = fields {
        for (k, v) in fields {
            obj.insert(k, v);
        }
    }
    serde_json::Value::Object(obj)
}

pub fn write_json_artifact(path: &Path, value: &serde_json::Value) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("json serializes");
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json(path: &Path) -> Result<serde_json::Value, PipelineError> {
    let text = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Artifact {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn json_fingerprint(value: &serde_json::Value) -> Option<String> {
    value.get("fingerprint").and_then(|v| v.as_str()).map(String::from)
}

// ── Alarm stream CSV ─────────────────────────────────────────────────────

/// Serializes alarms as `minute,cell_id,level,score,services`; `score` is
/// the natural log of the fused exceedance likelihood.
pub fn alarms_to_csv(
    alarms: &[DetectedAnomaly],
    service_names: &[String],
    meta: &ArtifactMeta,
) -> String {
    let mut out = format!("# {}\nminute,cell_id,level,score,services\n", meta.to_line());
    for a in alarms {
        let services: Vec<&str> = a
            .services
            .iter()
            .filter_map(|i| service_names.get(i).map(|s| s.as_str()))
            .collect();
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            a.minute,
            a.cell,
            a.level,
            a.log_score,
            services.join("+")
        ));
    }
    out
}

pub fn parse_alarms_csv(
    content: &str,
    service_names: &[String],
) -> Result<Vec<DetectedAnomaly>, PipelineError> {
    let index_of = |name: &str| service_names.iter().position(|s| s == name);
    let mut alarms = Vec::new();
    for (lineno, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("minute,") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let bad = |message: String| PipelineError::Artifact {
            path: format!("alarms line {}", lineno + 1),
            message,
        };
        if parts.len() != 5 {
            return Err(bad(format!("expected 5 columns, got {}", parts.len())));
        }
        let minute = Minute::parse(parts[0]).map_err(&bad)?;
        let cell = CellId::new(parts[1]).map_err(&bad)?;
        let level: u8 = parts[2].parse().map_err(|_| bad(format!("bad level {:?}", parts[2])))?;
        let log_score: f64 =
            parts[3].parse().map_err(|_| bad(format!("bad score {:?}", parts[3])))?;
        let mut services = ServiceSet::default();
        if !parts[4].is_empty() {
            for name in parts[4].split('+') {
                let idx = index_of(name)
                    .ok_or_else(|| bad(format!("unknown service {name:?} in alarm stream")))?;
                services.insert(idx);
            }
        }
        alarms.push(DetectedAnomaly { cell, minute, level, log_score, services });
    }
    Ok(alarms)
}

pub fn write_alarms_csv(
    path: &Path,
    alarms: &[DetectedAnomaly],
    service_names: &[String],
    meta: &ArtifactMeta,
) -> Result<(), PipelineError> {
    write_atomic(path, alarms_to_csv(alarms, service_names, meta).as_bytes())
}

pub fn read_alarms_csv(
    path: &Path,
    service_names: &[String],
) -> Result<(Vec<DetectedAnomaly>, Option<ArtifactMeta>), PipelineError> {
    let content = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let meta = ArtifactMeta::parse_header(&content);
    Ok((parse_alarms_csv(&content, service_names)?, meta))
}

// ── Training scores CSV ──────────────────────────────────────────────────

/// `minute,cell_id,log_score,services` for the fused training scores that
/// feed calibration.
pub fn write_train_scores_csv(
    path: &Path,
    scores: &BTreeMap<CellId, Vec<(Minute, f64, ServiceSet)>>,
    service_names: &[String],
    meta: &ArtifactMeta,
) -> Result<(), PipelineError> {
    let mut out = format!("# {}\nminute,cell_id,log_score,services\n", meta.to_line());
    for (cell, entries) in scores {
        for (minute, log_score, services) in entries {
            let names: Vec<&str> = services
                .iter()
                .filter_map(|i| service_names.get(i).map(|s| s.as_str()))
                .collect();
            out.push_str(&format!("{minute},{cell},{log_score},{}\n", names.join("+")));
        }
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_train_scores_csv(
    path: &Path,
) -> Result<(BTreeMap<CellId, Vec<f64>>, Option<ArtifactMeta>), PipelineError> {
    let content = fs::read_to_string(path).map_err(|source| PipelineError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let meta = ArtifactMeta::parse_header(&content);
    let mut scores: BTreeMap<CellId, Vec<f64>> = BTreeMap::new();
    for (lineno, line) in content.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("minute,") {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        let bad = |message: String| PipelineError::Artifact {
            path: format!("train scores line {}", lineno + 1),
            message,
        };
        if parts.len() != 4 {
            return Err(bad(format!("expected 4 columns, got {}", parts.len())));
        }
        let cell = CellId::new(parts[1]).map_err(&bad)?;
        let log_score: f64 =
            parts[2].parse().map_err(|_| bad(format!("bad score {:?}", parts[2])))?;
        scores.entry(cell).or_default().push(log_score);
    }
    Ok((scores, meta))
}

// ── Thresholds JSON ──────────────────────────────────────────────────────

pub fn thresholds_to_json(
    thresholds: &LevelThresholds,
    fingerprint: &str,
    method: Method,
) -> serde_json::Value {
    json_artifact(
        "thresholds",
        fingerprint,
        serde_json::json!({
            "method": method.label(),
            "antennas": serde_json::to_value(&thresholds.antennas).expect("thresholds serialize"),
        }),
    )
}

pub fn thresholds_from_json(value: &serde_json::Value) -> Result<LevelThresholds, PipelineError> {
    let antennas = value.get("antennas").ok_or_else(|| PipelineError::Artifact {
        path: "thresholds".into(),
        message: "missing antennas field".into(),
    })?;
    let antennas = serde_json::from_value(antennas.clone()).map_err(|e| PipelineError::Artifact {
        path: "thresholds".into(),
        message: e.to_string(),
    })?;
    Ok(LevelThresholds { antennas })
}

// ── Model persistence ────────────────────────────────────────────────────

/// One persisted pair model document.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelDoc<M> {
    pub format_version: u32,
    pub kind: String,
    pub fingerprint: String,
    pub method: String,
    pub cell: String,
    pub service: String,
    pub model: M,
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

/// Deterministic, collision-free model file name for a pair.
pub fn model_file_name(cell: &str, service: &str) -> String {
    let mut h = crate::stats::fnv1a64(0, cell.as_bytes());
    h = crate::stats::fnv1a64(h, &[0]);
    h = crate::stats::fnv1a64(h, service.as_bytes());
    format!("{}__{}__{:08x}.json", sanitize(cell), sanitize(service), h as u32)
}

pub fn model_dir(out_dir: &Path, method: Method) -> PathBuf {
    out_dir.join("models").join(method.label())
}
