//! Deterministic additive forecaster: piecewise-linear trend, weekly Fourier
//! seasonality and a binary holiday regressor, fitted by ridge least squares.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::AdaptiveError;
use crate::telemetry::{Minute, PairSeries, MINUTES_PER_WEEK};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForecastParams {
    /// Fourier pairs over the 10080-minute week.
    pub fourier_order: usize,
    /// Interior trend knots per 30 days of training span.
    pub knots_per_month: f64,
    /// Ridge penalty per training row (intercept unpenalized).
    pub ridge: f64,
    pub min_training_weeks: usize,
}

impl Default for ForecastParams {
    fn default() -> Self {
        ForecastParams { fourier_order: 10, knots_per_month: 4.0, ridge: 1e-4, min_training_weeks: 2 }
    }
}

/// Fitted additive model for one (cell, service).
///
/// The seasonal component is a zero-mean function of minute-of-week by
/// construction (integer harmonics over one full week).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    origin: Minute,
    /// Training-span length in minutes; normalizes the trend axis.
    scale: f64,
    intercept: f64,
    slope: f64,
    knots: Vec<f64>,
    hinge_coefs: Vec<f64>,
    /// (sin, cos) coefficient per harmonic 1..=K.
    fourier: Vec<(f64, f64)>,
    holiday_coef: f64,
}

impl ForecastModel {
    /// Fits coefficients by ridge-regularized least squares on the present
    /// training minutes. Deterministic given inputs and parameters.
    pub fn fit(
        series: &PairSeries,
        holidays: &BTreeSet<i64>,
        params: &ForecastParams,
    ) -> Result<Self, AdaptiveError> {
        let weeks = series.present_count() / MINUTES_PER_WEEK as usize;
        if weeks < params.min_training_weeks {
            return Err(AdaptiveError::InsufficientWeeks {
                got: weeks,
                need: params.min_training_weeks,
            });
        }

        let origin = series.start();
        let scale = (series.len() as f64).max(1.0);
        let days = series.len() as f64 / 1440.0;
        let knot_count = ((days / 30.0 * params.knots_per_month).round() as usize).max(1);
        let knots: Vec<f64> =
            (1..=knot_count).map(|j| j as f64 / (knot_count + 1) as f64).collect();

        let k = params.fourier_order;
        let p = 2 + knots.len() + 2 * k + 1;
        let mut xtx = DMatrix::<f64>::zeros(p, p);
        let mut xty = DVector::<f64>::zeros(p);
        let mut row = vec![0.0; p];
        let mut n_rows = 0usize;

        for (t, v) in series.iter_present() {
            fill_row(&mut row, t, origin, scale, &knots, k, holidays);
            let y = v as f64;
            for i in 0..p {
                if row[i] == 0.0 {
                    continue;
                }
                xty[i] += row[i] * y;
                for j in i..p {
                    xtx[(i, j)] += row[i] * row[j];
                }
            }
            n_rows += 1;
        }
        for i in 0..p {
            for j in 0..i {
                xtx[(i, j)] = xtx[(j, i)];
            }
        }
        // Ridge on everything but the intercept keeps the normal equations
        // positive definite regardless of the design.
        let lambda = params.ridge * n_rows as f64;
        for i in 1..p {
            xtx[(i, i)] += lambda;
        }
        xtx[(0, 0)] += 1e-12 * n_rows as f64;

        let chol = xtx.cholesky().ok_or(AdaptiveError::FitFailed)?;
        let beta = chol.solve(&xty);

        let mut idx = 0;
        let mut next = || {
            let v = beta[idx];
            idx += 1;
            v
        };
        let intercept = next();
        let slope = next();
        let hinge_coefs: Vec<f64> = (0..knots.len()).map(|_| next()).collect();
        let fourier: Vec<(f64, f64)> = (0..k).map(|_| (next(), next())).collect();
        let holiday_coef = next();

        Ok(ForecastModel {
            origin,
            scale,
            intercept,
            slope,
            knots,
            hinge_coefs,
            fourier,
            holiday_coef,
        })
    }

    /// ṽ(t) = trend(t) + seasonality(minute-of-week) + holiday offset.
    pub fn predict(&self, t: Minute, is_holiday: bool) -> f64 {
        let x = (t - self.origin) as f64 / self.scale;
        let mut v = self.intercept + self.slope * x;
        for (knot, coef) in self.knots.iter().zip(&self.hinge_coefs) {
            let h = x - knot;
            if h > 0.0 {
                v += coef * h;
            }
        }
        v += self.seasonal(t.minute_of_week());
        if is_holiday {
            v += self.holiday_coef;
        }
        v
    }

    /// Seasonal component at a minute-of-week.
    pub fn seasonal(&self, minute_of_week: usize) -> f64 {
        let base = 2.0 * std::f64::consts::PI * minute_of_week as f64 / MINUTES_PER_WEEK as f64;
        self.fourier
            .iter()
            .enumerate()
            .map(|(i, (s, c))| {
                let arg = base * (i + 1) as f64;
                s * arg.sin() + c * arg.cos()
            })
            .sum()
    }

    pub fn holiday_coef(&self) -> f64 {
        self.holiday_coef
    }

    /// Constructs a model directly from coefficients (mainly for tests).
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        origin: Minute,
        scale: f64,
        intercept: f64,
        slope: f64,
        knots: Vec<f64>,
        hinge_coefs: Vec<f64>,
        fourier: Vec<(f64, f64)>,
        holiday_coef: f64,
    ) -> Self {
        ForecastModel { origin, scale, intercept, slope, knots, hinge_coefs, fourier, holiday_coef }
    }

    pub fn max_abs_non_trend_coef(&self) -> f64 {
        self.fourier
            .iter()
            .flat_map(|(s, c)| [s.abs(), c.abs()])
            .chain(self.hinge_coefs.iter().map(|c| c.abs()))
            .chain([self.holiday_coef.abs(), self.slope.abs()])
            .fold(0.0, f64::max)
    }
}

fn fill_row(
    row: &mut [f64],
    t: Minute,
    origin: Minute,
    scale: f64,
    knots: &[f64],
    fourier_order: usize,
    holidays: &BTreeSet<i64>,
) {
    let x = (t - origin) as f64 / scale;
    let mut i = 0;
    row[i] = 1.0;
    i += 1;
    row[i] = x;
    i += 1;
    for knot in knots {
        row[i] = (x - knot).max(0.0);
        i += 1;
    }
    let base = 2.0 * std::f64::consts::PI * t.minute_of_week() as f64 / MINUTES_PER_WEEK as f64;
    for j in 1..=fourier_order {
        let arg = base * j as f64;
        row[i] = arg.sin();
        row[i + 1] = arg.cos();
        i += 2;
    }
    row[i] = if holidays.contains(&t.day_index()) { 1.0 } else { 0.0 };
}
