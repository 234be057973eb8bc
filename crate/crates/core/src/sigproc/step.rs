//! Step-response metrics.

use serde::{Deserialize, Serialize};

use super::SigprocError;

/// Settling band half-width, as a fraction of the step height.
pub const SETTLING_BAND: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    /// 10 % → 90 % crossing interval, s.
    pub rise_time: f64,
    /// Time after which the signal stays in the settling band, s.
    pub settling_time: f64,
    /// Peak excursion past steady state over the step height.
    pub overshoot: f64,
    pub steady_state: f64,
    pub initial: f64,
}

/// Metrics for a step that starts at the first sample.
///
/// Steady state is the mean of the trailing `final_window` fraction. Crossing
/// times are the first samples at or past each level, without interpolation.
pub fn step_metrics(x: &[f64], dt: f64, final_window: f64) -> Result<StepMetrics, SigprocError> {
    if x.len() < 3 {
        return Err(SigprocError::TooShort { len: x.len(), min: 3 });
    }
    if !(final_window > 0.0 && final_window <= 1.0) {
        return Err(SigprocError::InvalidWindow { window: 0, len: x.len() });
    }
    let tail = ((x.len() as f64 * final_window).round() as usize).clamp(1, x.len());
    let steady = x[x.len() - tail..].iter().sum::<f64>() / tail as f64;
    let initial = x[0];
    let height = steady - initial;
    if height == 0.0 || !height.is_finite() {
        return Err(SigprocError::NoStep);
    }
    // Normalised progress towards steady state, rising for either step direction.
    let progress: Vec<f64> = x.iter().map(|v| (v - initial) / height).collect();
    let first_at = |level: f64| progress.iter().position(|&p| p >= level);
    let (i10, i90) = match (first_at(0.1), first_at(0.9)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(SigprocError::NotSettled),
    };
    let outside = |p: f64| (p - 1.0).abs() > SETTLING_BAND;
    if outside(*progress.last().unwrap()) {
        return Err(SigprocError::NotSettled);
    }
    let settle_idx = progress.iter().rposition(|&p| outside(p)).map_or(0, |i| i + 1);
    let peak = progress.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(StepMetrics {
        rise_time: (i90 - i10) as f64 * dt,
        settling_time: settle_idx as f64 * dt,
        overshoot: (peak - 1.0).max(0.0),
        steady_state: steady,
        initial,
    })
}
