//! Activity data model: identifiers, minute-indexed count cubes, CSV
//! ingestion, train/test fold slicing and the active-pair filter.

mod cube;
mod folds;
mod io;
mod registry;
mod time;

pub use cube::{ActivityCube, CellId, PairKey, PairSeries, ServiceId};
pub use folds::{slice_folds, Fold, FoldSpec};
pub use io::{load_activity_csv, write_activity_csv, ColumnMap};
pub use registry::{CellInfo, CellRegistry};
pub use time::{Minute, TimeSpan, MINUTES_PER_DAY, MINUTES_PER_WEEK};

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TelemetryError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {message}")]
    Validation { line: u64, message: String },
    #[error("no activity rows found in {path}")]
    EmptyCube { path: String },
    #[error("fold spec invalid: {0}")]
    FoldSpec(String),
    #[error("cell registry: {0}")]
    Registry(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Pairs whose mean training count (over present minutes) reaches
/// `min_mean_rate` events/minute. Pairs excluded here produce no models and
/// therefore no detections downstream.
///
/// Missing minutes carry no information and are left out of the mean.
pub fn filter_active_pairs(train: &ActivityCube, min_mean_rate: f64) -> BTreeSet<PairKey> {
    train
        .pairs()
        .filter_map(|(key, series)| {
            let present = series.present_count();
            if present == 0 {
                return None;
            }
            let mean = series.total() as f64 / present as f64;
            (mean >= min_mean_rate).then(|| key.clone())
        })
        .collect()
}
