//! Frequency-calibrated anomaly levels.
//!
//! Raw fused scores are comparable only within one antenna, so each antenna
//! gets its own thresholds, chosen on the training score distribution so that
//! a nominal stream crosses them at target rates: once per 4 hours for level
//! 1, once per day for level 2, once per week for level 3. Three intermediate
//! rates (8 h, 12 h, 2 days) refine the sensitivity axis for PR curves.
//!
//! Scores are log-likelihoods: lower = rarer.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signature::ServiceSet;
use crate::telemetry::{CellId, Minute};

#[derive(Debug, Error)]
pub enum LevelError {
    #[error("antenna {0} has no calibrated thresholds")]
    Uncalibrated(CellId),
}

/// Alarm sensitivities, ordered from most frequent to rarest.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub enum Sensitivity {
    #[serde(rename = "4h")]
    H4,
    #[serde(rename = "8h")]
    H8,
    #[serde(rename = "12h")]
    H12,
    #[serde(rename = "1d")]
    D1,
    #[serde(rename = "2d")]
    D2,
    #[serde(rename = "1w")]
    W1,
}

impl Sensitivity {
    pub const ALL: [Sensitivity; 6] = [
        Sensitivity::H4,
        Sensitivity::H8,
        Sensitivity::H12,
        Sensitivity::D1,
        Sensitivity::D2,
        Sensitivity::W1,
    ];

    /// Target exceedance frequency in events per monitored minute.
    pub fn rate_per_minute(self) -> f64 {
        1.0 / self.period_minutes() as f64
    }

    pub fn period_minutes(self) -> u32 {
        match self {
            Sensitivity::H4 => 4 * 60,
            Sensitivity::H8 => 8 * 60,
            Sensitivity::H12 => 12 * 60,
            Sensitivity::D1 => 24 * 60,
            Sensitivity::D2 => 48 * 60,
            Sensitivity::W1 => 7 * 24 * 60,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Sensitivity::H4 => "4h",
            Sensitivity::H8 => "8h",
            Sensitivity::H12 => "12h",
            Sensitivity::D1 => "1d",
            Sensitivity::D2 => "2d",
            Sensitivity::W1 => "1w",
        }
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        Sensitivity::ALL
            .into_iter()
            .find(|s| s.label() == text)
            .ok_or_else(|| format!("unknown sensitivity {text:?}; expected one of 4h|8h|12h|1d|2d|1w"))
    }

    /// The canonical output level this sensitivity corresponds to, if any.
    pub fn canonical_level(self) -> Option<u8> {
        match self {
            Sensitivity::H4 => Some(1),
            Sensitivity::D1 => Some(2),
            Sensitivity::W1 => Some(3),
            _ => None,
        }
    }

    pub fn for_level(level: u8) -> Option<Sensitivity> {
        match level {
            1 => Some(Sensitivity::H4),
            2 => Some(Sensitivity::D1),
            3 => Some(Sensitivity::W1),
            _ => None,
        }
    }
}

/// Calibrated per-antenna thresholds, in log-likelihood units.
///
/// A score crosses a threshold when `score <= threshold` (inclusive on the
/// rare side). `None` marks a frequency that could not be calibrated without
/// over-alarming (ties at the rank boundary).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaThresholds {
    pub training_minutes: usize,
    pub thresholds: BTreeMap<Sensitivity, Option<f64>>,
}

impl AntennaThresholds {
    pub fn threshold(&self, sensitivity: Sensitivity) -> Option<f64> {
        self.thresholds.get(&sensitivity).copied().flatten()
    }

    pub fn crosses(&self, log_score: f64, sensitivity: Sensitivity) -> bool {
        match self.threshold(sensitivity) {
            Some(t) => log_score <= t,
            None => false,
        }
    }

    /// Highest canonical level whose threshold the score crosses.
    pub fn level(&self, log_score: f64) -> u8 {
        for level in (1..=3u8).rev() {
            let sensitivity = Sensitivity::for_level(level).expect("canonical level");
            if self.crosses(log_score, sensitivity) {
                return level;
            }
        }
        0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelThresholds {
    pub antennas: BTreeMap<CellId, AntennaThresholds>,
}

impl LevelThresholds {
    pub fn get(&self, cell: &CellId) -> Option<&AntennaThresholds> {
        self.antennas.get(cell)
    }

    /// Level for a score on an antenna; uncalibrated antennas stay at 0.
    pub fn level(&self, cell: &CellId, log_score: f64) -> u8 {
        self.get(cell).map_or(0, |t| t.level(log_score))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationParams {
    /// Antennas with fewer training scores than this are left uncalibrated.
    pub min_training_minutes: usize,
}

impl Default for CalibrationParams {
    fn default() -> Self {
        CalibrationParams { min_training_minutes: 10080 }
    }
}

/// Threshold for one target frequency: the largest score value that at most
/// ⌈N·f⌉ training scores reach (ties broken toward fewer alarms). `None` when
/// even the rarest value is too common.
fn threshold_at(sorted: &[f64], rate_per_minute: f64) -> Option<f64> {
    let n = sorted.len();
    let k = ((n as f64 * rate_per_minute).ceil() as usize).max(1);
    if k > n {
        return None;
    }
    // Candidate: the k-th rarest (k-th smallest) value.
    let candidate = sorted[k - 1];
    let crossing = sorted.partition_point(|v| *v <= candidate);
    if crossing <= k {
        return Some(candidate);
    }
    // Ties at the boundary would over-alarm; step down to the previous
    // distinct value.
    let first_tie = sorted.partition_point(|v| *v < candidate);
    (first_tie > 0).then(|| sorted[first_tie - 1])
}

/// Calibrates per-antenna thresholds for every sensitivity from training
/// scores (log-likelihoods). Antennas with no scores are excluded; antennas
/// with degenerate score distributions end up with all-`None` thresholds and
/// therefore always assign level 0.
pub fn calibrate_thresholds(
    train_scores: &BTreeMap<CellId, Vec<f64>>,
    params: &CalibrationParams,
) -> LevelThresholds {
    let mut antennas = BTreeMap::new();
    for (cell, scores) in train_scores {
        if scores.is_empty() || scores.len() < params.min_training_minutes {
            continue;
        }
        let mut sorted = scores.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let thresholds = Sensitivity::ALL
            .into_iter()
            .map(|s| (s, threshold_at(&sorted, s.rate_per_minute())))
            .collect();
        antennas.insert(
            cell.clone(),
            AntennaThresholds { training_minutes: scores.len(), thresholds },
        );
    }
    LevelThresholds { antennas }
}

/// Alarm for one antenna-minute. Level-0 verdicts are never materialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectedAnomaly {
    pub cell: CellId,
    pub minute: Minute,
    pub level: u8,
    /// Fused log-likelihood that produced the level.
    pub log_score: f64,
    pub services: ServiceSet,
}
