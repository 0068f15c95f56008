//! Compound deviation distribution: empirical body, Gamma tail.
//!
//! Training deviations below the tail cut θ = μ + h·σ are scored by their
//! empirical right-closed survival; deviations at or above θ are scored by a
//! Gamma survival fitted to the exceedances (ε − θ), scaled by the empirical
//! tail mass p_tail. The two branches meet at θ with survival exactly p_tail.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, gamma_ur, ln_gamma};

use super::SignatureError;
use crate::stats::{mean_std, trigamma};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TailParams {
    /// Tail cut multiplier in θ = μ + h·σ.
    pub h: f64,
    /// Minimum training deviations required to fit a model.
    pub min_sample: usize,
    /// Below this many exceedances the tail falls back to an exponential.
    pub min_exceedances: usize,
}

impl Default for TailParams {
    fn default() -> Self {
        // One week of minutes; h isolates the extreme upper percentile.
        TailParams { h: 2.32, min_sample: 10080, min_exceedances: 30 }
    }
}

/// Right-closed empirical survival S(ε) = #{x ≥ ε}/n over a sorted sample,
/// stored as a value→survival grid.
///
/// Samples up to `MAX_KNOTS` are stored exactly; larger samples keep an
/// even-rank sketch, which stays monotone and self-consistent across
/// persistence round-trips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalSurvival {
    values: Vec<f64>,
    survivals: Vec<f64>,
    sample_size: usize,
}

const MAX_KNOTS: usize = 4096;

impl EmpiricalSurvival {
    fn from_sorted(sorted: &[f64]) -> Self {
        let n = sorted.len();
        let knots = n.min(MAX_KNOTS);
        let mut values = Vec::with_capacity(knots);
        let mut survivals = Vec::with_capacity(knots);
        for j in 0..knots {
            let idx = if knots == 1 { 0 } else { (j * (n - 1)) / (knots - 1) };
            let v = sorted[idx];
            if values.last() == Some(&v) {
                continue;
            }
            // Survival of the value uses its first occurrence, so ties count
            // fully (right-closed).
            let first = sorted.partition_point(|x| *x < v);
            values.push(v);
            survivals.push((n - first) as f64 / n as f64);
        }
        EmpiricalSurvival { values, survivals, sample_size: n }
    }

    /// S(ε) = #{x ≥ ε}/n; exact when the grid holds the full sample.
    pub fn survival(&self, eps: f64) -> f64 {
        let j = self.values.partition_point(|v| *v < eps);
        if j == self.values.len() {
            0.0
        } else {
            self.survivals[j]
        }
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }
}

/// Gamma tail over exceedances, with an exponential fallback (shape 1) when
/// too few exceedances support a two-parameter fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaTail {
    pub shape: f64,
    pub scale: f64,
    pub exponential_fallback: bool,
}

impl GammaTail {
    /// P[X ≥ x] for x ≥ 0.
    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if self.shape == 1.0 {
            (-x / self.scale).exp()
        } else {
            gamma_ur(self.shape, x / self.scale)
        }
    }

    /// ln P[X ≥ x]; finite for any finite x, never −∞.
    pub fn log_survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        let z = x / self.scale;
        if self.shape == 1.0 {
            return -z;
        }
        let sf = gamma_ur(self.shape, z);
        if sf > 1e-280 {
            sf.ln()
        } else {
            // Asymptotic upper incomplete gamma: Q(a,z) ≈ z^{a−1} e^{−z}/Γ(a)
            // · (1 + (a−1)/z + (a−1)(a−2)/z²); z is huge whenever sf
            // underflows, so three terms are ample.
            let a = self.shape;
            let series = 1.0 + (a - 1.0) / z + (a - 1.0) * (a - 2.0) / (z * z);
            (a - 1.0) * z.ln() - z - ln_gamma(a) + series.max(f64::MIN_POSITIVE).ln()
        }
    }
}

/// Fits a Gamma to positive draws by method of moments, then refines the
/// shape with Newton steps on the likelihood score (≤ 50 iterations).
pub fn fit_gamma(sample: &[f64]) -> Option<GammaTail> {
    let (mean, std) = mean_std(sample);
    if !(mean > 0.0) || !(std > 0.0) {
        return None;
    }
    let var = std * std;
    let mut shape = (mean * mean / var).clamp(1e-3, 1e6);

    let positives: Vec<f64> = sample.iter().copied().filter(|x| *x > 0.0).collect();
    if positives.len() >= sample.len() / 2 {
        let log_mean = positives.iter().map(|x| x.ln()).sum::<f64>() / positives.len() as f64;
        let target = mean.ln() - log_mean;
        if target > 0.0 {
            for _ in 0..50 {
                let f = shape.ln() - digamma(shape) - target;
                let fp = 1.0 / shape - trigamma(shape);
                let step = f / fp;
                let next = (shape - step).clamp(shape / 10.0, shape * 10.0).clamp(1e-3, 1e6);
                if (next - shape).abs() <= 1e-12 * shape {
                    shape = next;
                    break;
                }
                shape = next;
            }
        }
    }
    Some(GammaTail { shape, scale: mean / shape, exponential_fallback: false })
}

/// Compound empirical + Gamma deviation distribution for one (cell, service).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviationModel {
    mean: f64,
    std: f64,
    theta: f64,
    p_tail: f64,
    empirical: EmpiricalSurvival,
    tail: GammaTail,
    sample_size: usize,
}

impl DeviationModel {
    /// Fits the compound distribution to training deviations.
    ///
    /// Zero sample variance demotes the pair (degenerate-model error); fewer
    /// than `min_exceedances` exceedances fall back to an exponential tail
    /// with scale = mean exceedance, flagged on the model.
    pub fn fit(deviations: &[f64], params: &TailParams) -> Result<Self, SignatureError> {
        let n = deviations.len();
        if n < params.min_sample {
            return Err(SignatureError::InsufficientSample { got: n, need: params.min_sample });
        }
        let (mean, std) = mean_std(deviations);
        if !(std > 0.0) {
            return Err(SignatureError::DegenerateModel);
        }
        let theta = mean + params.h * std;

        let mut sorted = deviations.to_vec();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let empirical = EmpiricalSurvival::from_sorted(&sorted);

        let cut = sorted.partition_point(|x| *x < theta);
        let exceedances: Vec<f64> = sorted[cut..].iter().map(|x| x - theta).collect();

        let (p_tail, tail) = if exceedances.is_empty() {
            // Bounded sample with no mass beyond θ: reserve one pseudo-count
            // of tail mass and decay it at the body's own scale.
            (1.0 / (n as f64 + 1.0), GammaTail { shape: 1.0, scale: std, exponential_fallback: true })
        } else {
            let p_tail = exceedances.len() as f64 / n as f64;
            let tail = if exceedances.len() < params.min_exceedances {
                let mean_exc = exceedances.iter().sum::<f64>() / exceedances.len() as f64;
                GammaTail {
                    shape: 1.0,
                    scale: mean_exc.max(1e-12 * std.max(1.0)),
                    exponential_fallback: true,
                }
            } else {
                match fit_gamma(&exceedances) {
                    Some(tail) => tail,
                    None => {
                        let mean_exc = exceedances.iter().sum::<f64>() / exceedances.len() as f64;
                        GammaTail {
                            shape: 1.0,
                            scale: mean_exc.max(1e-12 * std.max(1.0)),
                            exponential_fallback: true,
                        }
                    }
                }
            };
            (p_tail, tail)
        };

        Ok(DeviationModel { mean, std, theta, p_tail, empirical, tail, sample_size: n })
    }

    /// Exceedance likelihood ℒ = P[X ≥ ε] under the compound distribution.
    ///
    /// Empirical survival strictly below θ (clamped so it never drops below
    /// p_tail before the join), scaled Gamma survival at and above θ.
    /// Non-increasing in ε, always in (0, 1].
    pub fn survival(&self, eps: f64) -> f64 {
        if eps < self.theta {
            self.empirical.survival(eps).max(self.p_tail)
        } else {
            self.p_tail * self.tail.survival(eps - self.theta)
        }
    }

    /// ln of [`survival`]; finite for any finite deviation.
    pub fn log_survival(&self, eps: f64) -> f64 {
        if eps < self.theta {
            self.empirical.survival(eps).max(self.p_tail).ln()
        } else {
            self.p_tail.ln() + self.tail.log_survival(eps - self.theta)
        }
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn p_tail(&self) -> f64 {
        self.p_tail
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn tail(&self) -> GammaTail {
        self.tail
    }

    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    pub fn is_fallback(&self) -> bool {
        self.tail.exponential_fallback
    }

    pub fn empirical(&self) -> &EmpiricalSurvival {
        &self.empirical
    }
}
