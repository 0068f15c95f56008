//! Train/test fold slicing over contiguous day-aligned test intervals.

use serde::{Deserialize, Serialize};

use super::cube::ActivityCube;
use super::time::{TimeSpan, MINUTES_PER_DAY};
use super::TelemetryError;

/// Cross-validation layout: per-fold contiguous test interval, train on the
/// complement. Test intervals must tile the span without overlap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub test_intervals: Vec<TimeSpan>,
}

impl FoldSpec {
    /// `count` equal contiguous test intervals over `span`, split on day
    /// boundaries relative to the span start; the last fold absorbs the
    /// remainder.
    pub fn even(span: TimeSpan, count: usize) -> Result<Self, TelemetryError> {
        if count == 0 {
            return Err(TelemetryError::FoldSpec("fold count must be >= 1".into()));
        }
        let days = span.len() / MINUTES_PER_DAY;
        if days < count as i64 {
            return Err(TelemetryError::FoldSpec(format!(
                "span of {days} whole days cannot host {count} folds"
            )));
        }
        let base = days / count as i64;
        let mut intervals = Vec::with_capacity(count);
        let mut cursor = span.start;
        for i in 0..count {
            let len_days = if i == count - 1 { days - base * (count as i64 - 1) } else { base };
            let mut end = cursor + len_days * MINUTES_PER_DAY;
            if i == count - 1 {
                end = span.end; // absorb a trailing partial day
            }
            intervals.push(TimeSpan::new(cursor, end));
            cursor = end;
        }
        Ok(FoldSpec { test_intervals: intervals })
    }

    fn validate(&self, span: TimeSpan) -> Result<(), TelemetryError> {
        if self.test_intervals.is_empty() {
            return Err(TelemetryError::FoldSpec("no test intervals".into()));
        }
        let mut sorted = self.test_intervals.clone();
        sorted.sort_by_key(|s| s.start);
        for w in sorted.windows(2) {
            if w[1].start < w[0].end {
                return Err(TelemetryError::FoldSpec(format!(
                    "test intervals {} and {} overlap",
                    w[0], w[1]
                )));
            }
        }
        for interval in &sorted {
            if interval.start < span.start || interval.end > span.end {
                return Err(TelemetryError::FoldSpec(format!(
                    "test interval {interval} exceeds span {span}"
                )));
            }
            if interval.is_empty() {
                return Err(TelemetryError::FoldSpec("empty test interval".into()));
            }
        }
        for interval in &self.test_intervals {
            if interval.len() >= span.len() {
                return Err(TelemetryError::FoldSpec(format!(
                    "test interval {interval} leaves an empty training set"
                )));
            }
        }
        Ok(())
    }
}

/// One train/test split. The train cube keeps the full declared span with the
/// test minutes absent; the test cube is narrowed to its interval.
#[derive(Debug, Clone)]
pub struct Fold {
    pub test_interval: TimeSpan,
    pub train: ActivityCube,
    pub test: ActivityCube,
}

/// Slices a cube into per-fold train/test splits.
pub fn slice_folds(cube: &ActivityCube, spec: &FoldSpec) -> Result<Vec<Fold>, TelemetryError> {
    spec.validate(cube.span())?;
    let folds = spec
        .test_intervals
        .iter()
        .map(|&interval| Fold {
            test_interval: interval,
            train: cube.restrict(|t| !interval.contains(t)),
            test: cube.window(interval),
        })
        .collect();
    Ok(folds)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::{CellId, Minute, ServiceId};
    use rand::{Rng, SeedableRng};

    fn day_span(days: i64) -> TimeSpan {
        TimeSpan::new(Minute::new(0), Minute::new(days * MINUTES_PER_DAY))
    }

    #[test]
    fn ninety_days_three_folds() {
        let spec = FoldSpec::even(day_span(90), 3).unwrap();
        assert_eq!(spec.test_intervals.len(), 3);
        for interval in &spec.test_intervals {
            assert_eq!(interval.len(), 30 * MINUTES_PER_DAY);
        }
    }

    #[test]
    fn full_span_test_fold_rejected() {
        let span = day_span(30);
        let spec = FoldSpec { test_intervals: vec![span] };
        let cube = ActivityCube::new(span);
        match slice_folds(&cube, &spec) {
            Err(TelemetryError::FoldSpec(msg)) => assert!(msg.contains("empty training")),
            other => panic!("expected fold spec error, got {other:?}"),
        }
    }

    #[test]
    fn overlapping_intervals_rejected() {
        let span = day_span(30);
        let spec = FoldSpec {
            test_intervals: vec![
                TimeSpan::new(Minute::new(0), Minute::new(20 * MINUTES_PER_DAY)),
                TimeSpan::new(Minute::new(10 * MINUTES_PER_DAY), Minute::new(25 * MINUTES_PER_DAY)),
            ],
        };
        assert!(slice_folds(&ActivityCube::new(span), &spec).is_err());
    }

    #[test]
    fn test_slices_reassemble_the_cube() {
        // Random 9-week cube; union of the 3 test slices must equal it.
        let span = day_span(63);
        let mut cube = ActivityCube::new(span);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let cell = CellId::new("a1").unwrap();
        let services: Vec<_> =
            ["call4g", "sms4g"].iter().map(|s| ServiceId::new(*s).unwrap()).collect();
        for _ in 0..5000 {
            let t = Minute::new(rng.random_range(0..span.len()));
            let s = &services[rng.random_range(0..services.len())];
            cube.add_count(&cell, s, t, rng.random_range(0..50)).unwrap();
        }
        let folds = slice_folds(&cube, &FoldSpec::even(span, 3).unwrap()).unwrap();
        assert_eq!(folds.len(), 3);
        let mut reassembled = ActivityCube::new(span);
        for fold in &folds {
            for (key, series) in fold.test.pairs() {
                for (t, v) in series.iter_present() {
                    reassembled.add_count(&key.0, &key.1, t, v).unwrap();
                }
            }
        }
        assert_eq!(reassembled, cube);
        // Per fold, train + test reproduce every observation.
        for fold in &folds {
            for (key, series) in cube.pairs() {
                for (t, v) in series.iter_present() {
                    let train_v = fold.train.get(&key.0, &key.1, t);
                    let test_v = fold.test.span().contains(t).then(|| fold.test.get(&key.0, &key.1, t)).flatten();
                    assert_eq!(train_v.unwrap_or(0) + test_v.unwrap_or(0), v);
                    assert!(train_v.is_none() || test_v.is_none(), "train and test overlap");
                }
            }
        }
    }
}
