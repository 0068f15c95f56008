//! The Signature method: median weekly activity profile with zero-phase
//! low-pass smoothing, compound empirical + Gamma deviation distribution,
//! exceedance likelihoods and multi-service fusion by likelihood product.

mod butterworth;
mod model;

pub use butterworth::{filtfilt_circular, ButterworthParams};
pub use model::{fit_gamma, DeviationModel, EmpiricalSurvival, GammaTail, TailParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::telemetry::{Minute, PairSeries, MINUTES_PER_WEEK};

#[derive(Debug, Error)]
pub enum SignatureError {
    #[error("insufficient training weeks: got {got}, need {need}")]
    InsufficientWeeks { got: usize, need: usize },
    #[error("insufficient deviation sample: got {got}, need {need}")]
    InsufficientSample { got: usize, need: usize },
    #[error("zero deviation variance; pair demoted to inactive")]
    DegenerateModel,
    #[error("no observations in training series")]
    EmptySeries,
    #[error("invalid filter parameters: {0}")]
    FilterParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignatureParams {
    pub butterworth: ButterworthParams,
    /// Minimum distinct training weeks with data.
    pub min_training_weeks: usize,
}

impl Default for SignatureParams {
    fn default() -> Self {
        SignatureParams { butterworth: ButterworthParams::default(), min_training_weeks: 3 }
    }
}

/// Nominal weekly activity profile of one (cell, service): one value per
/// minute-of-week, Monday 00:00 first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklySignature {
    values: Vec<f64>,
}

impl WeeklySignature {
    pub fn from_values(values: Vec<f64>) -> Result<Self, String> {
        if values.len() != MINUTES_PER_WEEK as usize {
            return Err(format!("signature must have {MINUTES_PER_WEEK} values, got {}", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err("signature values must be finite".into());
        }
        Ok(WeeklySignature { values })
    }

    pub fn value_at(&self, minute_of_week: usize) -> f64 {
        self.values[minute_of_week]
    }

    pub fn predict(&self, t: Minute) -> f64 {
        self.values[t.minute_of_week()]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Per-minute-of-week medians over training weeks. Minutes absent from every
/// week are `None`.
pub fn weekly_medians(series: &PairSeries) -> Vec<Option<f64>> {
    let mut buckets: Vec<Vec<f64>> = vec![Vec::new(); MINUTES_PER_WEEK as usize];
    for (t, v) in series.iter_present() {
        buckets[t.minute_of_week()].push(v as f64);
    }
    buckets.into_iter().map(|mut b| crate::stats::median(&mut b)).collect()
}

/// Fills gaps in a periodic series by linear interpolation between the
/// nearest defined neighbours, wrapping around the period.
fn interpolate_circular(values: &[Option<f64>]) -> Option<Vec<f64>> {
    let n = values.len();
    let defined: Vec<usize> = (0..n).filter(|&i| values[i].is_some()).collect();
    if defined.is_empty() {
        return None;
    }
    let mut out = vec![0.0; n];
    if defined.len() == n {
        for (i, v) in values.iter().enumerate() {
            out[i] = v.unwrap();
        }
        return Some(out);
    }
    for i in 0..n {
        if let Some(v) = values[i] {
            out[i] = v;
            continue;
        }
        // Nearest defined index on each side, circularly.
        let prev = match defined.binary_search(&i) {
            Err(0) => defined[defined.len() - 1],
            Err(pos) => defined[pos - 1],
            Ok(_) => unreachable!(),
        };
        let next = match defined.binary_search(&i) {
            Err(pos) if pos == defined.len() => defined[0],
            Err(pos) => defined[pos],
            Ok(_) => unreachable!(),
        };
        let gap = (next + n - prev) % n;
        let offset = (i + n - prev) % n;
        let (a, b) = (values[prev].unwrap(), values[next].unwrap());
        out[i] = if gap == 0 { a } else { a + (b - a) * offset as f64 / gap as f64 };
    }
    Some(out)
}

/// Builds the weekly signature: per-minute-of-week median over training
/// weeks, low-pass filtered circularly with zero phase shift.
///
/// Missing training minutes contribute no sample; a minute-of-week missing
/// from every week is interpolated from its neighbours before filtering.
pub fn compute_weekly_signature(
    series: &PairSeries,
    params: &SignatureParams,
) -> Result<WeeklySignature, SignatureError> {
    params.butterworth.validate().map_err(SignatureError::FilterParams)?;
    // Weeks of data = total observed minutes in week units, so partial or
    // gappy weeks do not overcount.
    let weeks = series.present_count() / MINUTES_PER_WEEK as usize;
    if weeks < params.min_training_weeks {
        return Err(SignatureError::InsufficientWeeks {
            got: weeks,
            need: params.min_training_weeks,
        });
    }
    let medians = weekly_medians(series);
    let filled = interpolate_circular(&medians).ok_or(SignatureError::EmptySeries)?;
    let filtered = filtfilt_circular(&params.butterworth, &filled);
    WeeklySignature::from_values(filtered).map_err(SignatureError::FilterParams)
}

/// Signed deviation of an observation from the nominal signature level at
/// its minute-of-week: ε = observed − signature[m].
pub fn compute_deviation(observed: u32, signature: &WeeklySignature, t: Minute) -> f64 {
    observed as f64 - signature.predict(t)
}

/// Set of services contributing to a fused score, as indices into the run's
/// service list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServiceSet(u64);

impl ServiceSet {
    pub fn insert(&mut self, index: usize) {
        debug_assert!(index < 64);
        self.0 |= 1 << index;
    }

    pub fn contains(&self, index: usize) -> bool {
        self.0 & (1 << index) != 0
    }

    pub fn len(&self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.0 == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..64).filter(|i| self.contains(*i))
    }

    pub fn bits(&self) -> u64 {
        self.0
    }
}

/// Fused anomaly score for one (cell, minute): the product of per-service
/// exceedance likelihoods, accumulated in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodScore {
    pub log_value: f64,
    pub services: ServiceSet,
}

impl LikelihoodScore {
    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// Multiplies per-service likelihoods (given as natural logs) into one fused
/// score. Services without a score are simply absent from the contributing
/// set; an empty input yields no score rather than a neutral 1.0.
pub fn fuse_log_likelihoods(
    factors: impl IntoIterator<Item = (usize, f64)>,
) -> Option<LikelihoodScore> {
    let mut services = ServiceSet::default();
    let mut log_sum = 0.0;
    let mut any = false;
    for (index, log_value) in factors {
        debug_assert!(log_value <= 1e-12, "likelihood above 1");
        services.insert(index);
        log_sum += log_value;
        any = true;
    }
    any.then_some(LikelihoodScore { log_value: log_sum, services })
}
