//! The Adaptive method: an additive forecaster per (cell, service) and an
//! adaptive Shewhart chart over the forecast residuals.

mod chart;
mod forecaster;

pub use chart::{chart_step, AdaptiveChartState, AdaptiveScore, ChartParams};
pub use forecaster::{ForecastModel, ForecastParams};

use std::collections::BTreeSet;

use thiserror::Error;

use crate::telemetry::{Minute, PairSeries};

#[derive(Debug, Error)]
pub enum AdaptiveError {
    #[error("insufficient training weeks: got {got}, need {need}")]
    InsufficientWeeks { got: usize, need: usize },
    #[error("forecaster fit failed: normal equations not positive definite")]
    FitFailed,
    #[error("chart not warm-started")]
    ColdChart,
}

/// Forecast residual ε(t) = observed − predicted for every present minute.
pub fn residual_series(
    model: &ForecastModel,
    series: &PairSeries,
    holidays: &BTreeSet<i64>,
) -> Vec<(Minute, f64)> {
    series
        .iter_present()
        .map(|(t, v)| (t, v as f64 - model.predict(t, holidays.contains(&t.day_index()))))
        .collect()
}

/// Runs the chart over a series in chronological order: per present minute,
/// ε = observed − forecast, then one chart step. Missing minutes contribute
/// no score; the chart state decays by the true elapsed time across gaps.
pub fn adaptive_score_series(
    model: &ForecastModel,
    series: &PairSeries,
    holidays: &BTreeSet<i64>,
    params: &ChartParams,
    state: &mut AdaptiveChartState,
) -> Result<Vec<(Minute, AdaptiveScore)>, AdaptiveError> {
    if !state.is_warm() {
        return Err(AdaptiveError::ColdChart);
    }
    let mut out = Vec::with_capacity(series.present_count());
    let mut last: Option<Minute> = None;
    for (t, v) in series.iter_present() {
        if let Some(prev) = last {
            let gap = t - prev;
            if gap > 1 {
                // chart_step itself ages the state by one minute.
                state.decay(params, (gap - 1) as f64);
            }
        }
        let eps = v as f64 - model.predict(t, holidays.contains(&t.day_index()));
        out.push((t, chart_step(state, params, eps)));
        last = Some(t);
    }
    Ok(out)
}
