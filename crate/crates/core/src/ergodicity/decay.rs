use serde::{Deserialize, Serialize};

use super::DiagError;
use crate::stats::linear_fit;

/// Minimal `R^2` for a confirmed decay.
pub const MIN_R_SQUARED: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayVerdict {
    DecayConfirmed,
    NoDecay,
}

/// Log-linear fit `d(t) ~ c e^{-lambda t}` over the usable points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub times: Vec<f64>,
    pub distances: Vec<f64>,
    pub noise_floor: Vec<f64>,
    /// Whether each point entered the fit.
    pub used: Vec<bool>,
    pub rate: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub verdict: DecayVerdict,
}

/// Fits on the points strictly above a constant noise floor.
pub fn fit_exponential_decay(times: &[f64], distances: &[f64], noise_floor: f64) -> Result<DecayFit, DiagError> {
    let floors = vec![noise_floor; times.len()];
    fit_exponential_decay_with(times, distances, &floors, None)
}

/// Fits on the points strictly above their per-time floor and, when a
/// ceiling is given, strictly below it. A variation distance saturates at 2,
/// so callers pass `2 - floor` there to keep the plateau out of the fit.
pub fn fit_exponential_decay_with(
    times: &[f64],
    distances: &[f64],
    floors: &[f64],
    ceiling: Option<&[f64]>,
) -> Result<DecayFit, DiagError> {
    if times.len() != distances.len() || times.len() != floors.len() {
        return Err(DiagError::Invalid("series lengths differ".into()));
    }
    let used: Vec<bool> = (0..times.len())
        .map(|i| {
            let d = distances[i];
            d.is_finite() && d > floors[i] && ceiling.is_none_or(|c| d < c[i])
        })
        .collect();
    let (t, logd): (Vec<f64>, Vec<f64>) = (0..times.len())
        .filter(|i| used[*i])
        .map(|i| (times[i], distances[i].ln()))
        .unzip();
    if t.len() < 4 {
        return Err(DiagError::InsufficientSignal { usable: t.len() });
    }
    let fit = linear_fit(&t, &logd);
    let rate = -fit.slope;
    let verdict = if rate > 0.0 && fit.r_squared >= MIN_R_SQUARED {
        DecayVerdict::DecayConfirmed
    } else {
        DecayVerdict::NoDecay
    };
    Ok(DecayFit {
        times: times.to_vec(),
        distances: distances.to_vec(),
        noise_floor: floors.to_vec(),
        used,
        rate,
        prefactor: fit.intercept.exp(),
        r_squared: fit.r_squared,
        verdict,
    })
}
