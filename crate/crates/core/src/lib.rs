//! Anomaly detection for per-antenna, per-minute mobile-network activity counts.
//!
//! The library ingests minute-resolution activity counts per (cell, service)
//! pair and flags antenna-minutes whose traffic is unusually high, using two
//! unsupervised detectors:
//!
//! - **Signature**: a median weekly activity profile per pair, low-pass
//!   filtered, with deviations scored against a compound empirical + Gamma
//!   tail distribution and multi-service fusion by likelihood product.
//! - **Adaptive**: a deterministic additive forecaster (trend, weekly Fourier
//!   seasonality, holiday offset) whose residuals are monitored by a Shewhart
//!   control chart with exponentially decayed moments.
//!
//! Raw scores are converted into discrete anomaly levels 0-3 through
//! per-antenna thresholds calibrated to target alarm frequencies (once per
//! 4 hours / 1 day / 1 week). Detections can be matched against a ground-truth
//! database of uncommon urban events to compute precision, minute-wise and
//! event-wise recall, no-skill baselines, and PR curves. A synthetic traffic
//! generator with event injection provides desk-scale benchmarks.

pub mod adaptive;
pub mod eval;
pub mod levels;
pub mod pipeline;
pub mod signature;
pub mod stats;
pub mod synth;
pub mod telemetry;

// tmp
pub use telemetry::{ActivityCube, CellId, Minute, ServiceId, TimeSpan};
