//! Activity CSV interchange.
//!
//! Canonical format: header `minute,cell_id,service,count`, `minute` as
//! ISO-8601 UTC truncated to the minute, UTF-8, LF line endings, rows sorted
//! by (minute, cell_id, service) on write. Lines starting with `#` are
//! artifact metadata and are skipped on read.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::cube::{ActivityCube, CellId, ServiceId};
use super::time::{parse_minute_field, Minute, TimeSpan};
use super::TelemetryError;

/// Column-name mapping for non-canonical activity files.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub minute: String,
    pub cell_id: String,
    pub service: String,
    pub count: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            minute: "minute".into(),
            cell_id: "cell_id".into(),
            service: "service".into(),
            count: "count".into(),
        }
    }
}

fn reader(path: &Path) -> Result<csv::Reader<File>, TelemetryError> {
    let file = File::open(path).map_err(|source| TelemetryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn column_indices(
    headers: &csv::StringRecord,
    schema: &ColumnMap,
) -> Result<[usize; 4], TelemetryError> {
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TelemetryError::Parse {
                line: 1,
                message: format!("missing column {name:?} in header"),
            })
    };
    Ok([
        find(&schema.minute)?,
        find(&schema.cell_id)?,
        find(&schema.service)?,
        find(&schema.count)?,
    ])
}

/// Loads an activity cube, summing duplicate (cell, service, minute) rows.
/// The declared span is the tight hull of observed minutes.
pub fn load_activity_csv(path: impl AsRef<Path>, schema: &ColumnMap) -> Result<ActivityCube, TelemetryError> {
    let path = path.as_ref();

    // First pass: establish the span without buffering rows.
    let mut rdr = reader(path)?;
    let idx = column_indices(rdr.headers().map_err(csv_err)?, schema)?;
    let mut span: Option<(i64, i64)> = None;
    let mut record = csv::StringRecord::new();
    while rdr.read_record(&mut record).map_err(csv_err)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let t = parse_minute_field(field(&record, idx[0], line)?, line)?.value();
        span = Some(match span {
            None => (t, t),
            Some((lo, hi)) => (lo.min(t), hi.max(t)),
        });
    }
    let (lo, hi) = span.ok_or_else(|| TelemetryError::EmptyCube {
        path: path.display().to_string(),
    })?;
    let mut cube = ActivityCube::new(TimeSpan::new(Minute::new(lo), Minute::new(hi + 1)));

    // Second pass: parse and aggregate.
    let mut rdr = reader(path)?;
    let idx = column_indices(rdr.headers().map_err(csv_err)?, schema)?;
    while rdr.read_record(&mut record).map_err(csv_err)? {
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let t = parse_minute_field(field(&record, idx[0], line)?, line)?;
        let cell = CellId::new(field(&record, idx[1], line)?)
            .map_err(|message| TelemetryError::Validation { line, message })?;
        let service = ServiceId::new(field(&record, idx[2], line)?)
            .map_err(|message| TelemetryError::Validation { line, message })?;
        let raw_count = field(&record, idx[3], line)?;
        let count: i64 = raw_count.parse().map_err(|_| TelemetryError::Parse {
            line,
            message: format!("invalid count {raw_count:?}"),
        })?;
        if count < 0 {
            return Err(TelemetryError::Validation {
                line,
                message: format!("negative count {count}"),
            });
        }
        cube.add_count(&cell, &service, t, count as u32)
            .map_err(|message| TelemetryError::Validation { line, message })?;
    }
    Ok(cube)
}

fn field<'r>(record: &'r csv::StringRecord, idx: usize, line: u64) -> Result<&'r str, TelemetryError> {
    record.get(idx).ok_or_else(|| TelemetryError::Parse {
        line,
        message: format!("row has fewer than {} columns", idx + 1),
    })
}

fn csv_err(e: csv::Error) -> TelemetryError {
    let line = match e.position() {
        Some(p) => p.line(),
        None => 0,
    };
    TelemetryError::Parse { line, message: e.to_string() }
}

/// Writes the canonical activity CSV. `meta_lines` are emitted first as
/// `#`-prefixed comments.
pub fn write_activity_csv(
    cube: &ActivityCube,
    path: impl AsRef<Path>,
    meta_lines: &[String],
) -> Result<(), TelemetryError> {
    let path = path.as_ref();
    let io_err = |source| TelemetryError::Io { path: path.display().to_string(), source };
    let file = File::create(path).map_err(io_err)?;
    let mut w = BufWriter::new(file);
    for line in meta_lines {
        writeln!(w, "# {line}").map_err(io_err)?;
    }
    writeln!(w, "minute,cell_id,service,count").map_err(io_err)?;

    // Canonical row order: minute, then cell, then service.
    let mut rows: Vec<(Minute, &CellId, &ServiceId, u32)> = Vec::new();
    for ((cell, service), series) in cube.pairs().map(|(k, s)| ((&k.0, &k.1), s)) {
        for (t, v) in series.iter_present() {
            rows.push((t, cell, service, v));
        }
    }
    rows.sort_by(|a, b| (a.0, a.1, a.2).cmp(&(b.0, b.1, b.2)));
    for (t, cell, service, count) in rows {
        writeln!(w, "{t},{cell},{service},{count}").map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}
