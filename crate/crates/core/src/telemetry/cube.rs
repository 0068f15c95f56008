//! The activity cube: minute-indexed counts per (cell, service) pair.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::time::{Minute, TimeSpan};

/// Opaque, non-empty antenna/cell identifier.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CellId(String);

impl CellId {
    pub fn new(id: impl Into<String>) -> Result<Self, String> {
        let id = id.into();
        if id.is_empty() {
            return Err("cell id must be non-empty".into());
        }
        Ok(CellId(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CellId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Monitored service label (e.g. `call4g`, `sms3g`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServiceId(String);

impl ServiceId {
    pub fn new(name: impl Into<String>) -> Result<Self, String> {
        let name = name.into();
        if name.is_empty() {
            return Err("service name must be non-empty".into());
        }
        Ok(ServiceId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ServiceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub type PairKey = (CellId, ServiceId);

/// Sentinel for minutes with no observation. Counts are capped far below it,
/// so the sentinel can never be produced by aggregation.
const MISSING: u32 = u32::MAX;

/// Largest representable per-minute count after duplicate-row summing.
pub const MAX_COUNT: u32 = 1 << 30;

/// Dense minute series for one (cell, service) pair over the cube span.
///
/// Missing minutes are represented explicitly, never as zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSeries {
    start: Minute,
    values: Vec<u32>,
}

impl PairSeries {
    fn new(span: TimeSpan) -> Self {
        PairSeries {
            start: span.start,
            values: vec![MISSING; span.len() as usize],
        }
    }

    pub fn start(&self) -> Minute {
        self.start
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn index_of(&self, t: Minute) -> Option<usize> {
        let offset = t - self.start;
        (0 <= offset && (offset as usize) < self.values.len()).then_some(offset as usize)
    }

    pub fn get(&self, t: Minute) -> Option<u32> {
        let v = self.values[self.index_of(t)?];
        (v != MISSING).then_some(v)
    }

    /// Adds `count` at `t`, summing with any existing observation.
    fn add(&mut self, t: Minute, count: u32) {
        let idx = self.index_of(t).expect("minute within cube span");
        let slot = &mut self.values[idx];
        *slot = if *slot == MISSING {
            count.min(MAX_COUNT)
        } else {
            (*slot + count).min(MAX_COUNT)
        };
    }

    /// Observed minutes in chronological order.
    pub fn iter_present(&self) -> impl Iterator<Item = (Minute, u32)> + '_ {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != MISSING)
            .map(|(i, &v)| (self.start + i as i64, v))
    }

    pub fn present_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != MISSING).count()
    }

    pub fn total(&self) -> u64 {
        self.values.iter().filter(|&&v| v != MISSING).map(|&v| v as u64).sum()
    }
}

/// Minute-indexed activity counts for a set of (cell, service) pairs over a
/// contiguous declared span.
///
/// Built once by ingestion or generation, then treated as immutable; all
/// per-pair downstream work reads it concurrently.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityCube {
    span: TimeSpan,
    series: BTreeMap<PairKey, PairSeries>,
}

impl ActivityCube {
    pub fn new(span: TimeSpan) -> Self {
        ActivityCube { span, series: BTreeMap::new() }
    }

    pub fn span(&self) -> TimeSpan {
        self.span
    }

    /// Adds an observation, summing duplicates at the same key.
    pub fn add_count(
        &mut self,
        cell: &CellId,
        service: &ServiceId,
        t: Minute,
        count: u32,
    ) -> Result<(), String> {
        if !self.span.contains(t) {
            return Err(format!("minute {t} outside cube span {}", self.span));
        }
        if count >= MAX_COUNT {
            return Err(format!("count {count} exceeds maximum {MAX_COUNT}"));
        }
        self.series
            .entry((cell.clone(), service.clone()))
            .or_insert_with(|| PairSeries::new(self.span))
            .add(t, count);
        Ok(())
    }

    pub fn get(&self, cell: &CellId, service: &ServiceId, t: Minute) -> Option<u32> {
        self.series.get(&(cell.clone(), service.clone()))?.get(t)
    }

    pub fn pair(&self, key: &PairKey) -> Option<&PairSeries> {
        self.series.get(key)
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&PairKey, &PairSeries)> {
        self.series.iter()
    }

    pub fn pair_count(&self) -> usize {
        self.series.len()
    }

    pub fn cells(&self) -> Vec<CellId> {
        let mut cells: Vec<_> = self.series.keys().map(|(c, _)| c.clone()).collect();
        cells.dedup();
        cells
    }

    pub fn services(&self) -> Vec<ServiceId> {
        let mut services: Vec<_> = self.series.keys().map(|(_, s)| s.clone()).collect();
        services.sort();
        services.dedup();
        services
    }

    pub fn observation_count(&self) -> usize {
        self.series.values().map(|s| s.present_count()).sum()
    }

    pub fn total_count(&self) -> u64 {
        self.series.values().map(|s| s.total()).sum()
    }

    /// Copy holding only minutes for which `keep` is true; the declared span
    /// is unchanged and dropped minutes become missing.
    pub fn restrict(&self, keep: impl Fn(Minute) -> bool) -> ActivityCube {
        let mut out = ActivityCube::new(self.span);
        for (key, series) in &self.series {
            let dst = out
                .series
                .entry(key.clone())
                .or_insert_with(|| PairSeries::new(self.span));
            for (t, v) in series.iter_present() {
                if keep(t) {
                    dst.add(t, v);
                }
            }
        }
        out
    }

    /// Copy narrowed to `window`, which must lie inside the declared span.
    pub fn window(&self, window: TimeSpan) -> ActivityCube {
        assert!(
            window.start >= self.span.start && window.end <= self.span.end,
            "window {window} outside span {}",
            self.span
        );
        let mut out = ActivityCube::new(window);
        for (key, series) in &self.series {
            let dst = out.series.entry(key.clone()).or_insert_with(|| PairSeries::new(window));
            for (t, v) in series.iter_present() {
                if window.contains(t) {
                    dst.add(t, v);
                }
            }
        }
        out
    }
}
