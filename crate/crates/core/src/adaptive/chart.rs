//! Adaptive Shewhart control chart with exponentially decayed moments.
//!
//! Only three scalars persist: the decayed weight sum S0, the decayed
//! deviation sum S1 and the decayed squared-deviation sum S2. The running
//! mean is S1/S0 and the variance S2/S0 − (S1/S0)², clamped at zero. A
//! deviation at or above μ + h·σ is flagged and deliberately not folded into
//! the state, so a sustained anomaly cannot teach the chart to accept itself.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChartParams {
    /// Half-life τ in minutes: an observation τ minutes old weighs half as
    /// much as the current one.
    pub tau_minutes: f64,
    /// Alarm multiplier in the decision rule ε ≥ μ + h·σ.
    pub h: f64,
    /// Lower bound on σ so near-constant streams cannot divide by ~0.
    pub sigma_floor: f64,
}

impl Default for ChartParams {
    fn default() -> Self {
        ChartParams { tau_minutes: 1440.0, h: 3.0, sigma_floor: 0.5 }
    }
}

impl ChartParams {
    /// Weight of an observation `age_minutes` old: 2^(−age/τ).
    pub fn decay_weight(&self, age_minutes: f64) -> f64 {
        (-age_minutes / self.tau_minutes).exp2()
    }
}

/// Standardized verdict for one minute.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveScore {
    /// (ε − μ) / max(σ, σ_floor).
    pub z: f64,
    /// ε ≥ μ + h·max(σ, σ_floor), equivalently z ≥ h.
    pub flagged: bool,
}

/// The three decayed sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveChartState {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
}

impl AdaptiveChartState {
    pub fn empty() -> Self {
        AdaptiveChartState { s0: 0.0, s1: 0.0, s2: 0.0 }
    }

    /// Seeds the chart from residuals, flagging disabled: every observation
    /// is incorporated.
    pub fn seed(params: &ChartParams, residuals: &[f64]) -> Self {
        let mut state = Self::empty();
        let d = params.decay_weight(1.0);
        for &eps in residuals {
            state.s0 = state.s0 * d + 1.0;
            state.s1 = state.s1 * d + eps;
            state.s2 = state.s2 * d + eps * eps;
        }
        state
    }

    pub fn is_warm(&self) -> bool {
        self.s0 > 0.0
    }

    pub fn mean(&self) -> f64 {
        if self.s0 > 0.0 {
            self.s1 / self.s0
        } else {
            0.0
        }
    }

    pub fn std(&self) -> f64 {
        if self.s0 > 0.0 {
            let mu = self.s1 / self.s0;
            (self.s2 / self.s0 - mu * mu).max(0.0).sqrt()
        } else {
            0.0
        }
    }

    /// Ages the state by `minutes` without incorporating anything.
    pub fn decay(&mut self, params: &ChartParams, minutes: f64) {
        let d = params.decay_weight(minutes);
        self.s0 *= d;
        self.s1 *= d;
        self.s2 *= d;
    }
}

/// One chart step: age the state by one minute, judge ε against the decayed
/// moments, and incorporate ε only when it is not flagged.
pub fn chart_step(
    state: &mut AdaptiveChartState,
    params: &ChartParams,
    eps: f64,
) -> AdaptiveScore {
    debug_assert!(state.is_warm(), "chart must be warm-started before stepping");
    let mu = state.mean();
    let sigma = state.std().max(params.sigma_floor);
    let z = (eps - mu) / sigma;
    let flagged = eps >= mu + params.h * sigma;
    state.decay(params, 1.0);
    if !flagged {
        state.s0 += 1.0;
        state.s1 += eps;
        state.s2 += eps * eps;
    }
    AdaptiveScore { z, flagged }
}
