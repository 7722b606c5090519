use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{simulate_observed, InitialLaw, IntegratorError, PathObserver, SimOptions};
use crate::model::{localized_lpq_norm, AdmissiblePair, CenterSet, CoefficientSet, NormGrid, SimConfig};
use crate::rng::{derive_seed, salt, stream_rng};
use crate::stats::{mean, percentile, standard_error};

/// Scalar magnitude `|f_t(y)|` of a field on `[0, T] x R^{d2}`.
pub type ScalarField<'a> = &'a (dyn Fn(f64, &[f64]) -> f64 + Sync);

/// Localized norm to report alongside an estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct NormRequest {
    pub pair: AdmissiblePair,
    pub grid: NormGrid,
    pub centers: CenterSet,
}

/// Monte Carlo estimate of `E[exp(int_0^T |f_t(Y_t)|^2 dt)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KhasminskiiEstimate {
    /// `+inf` when some path's exponent overflowed.
    pub estimate: f64,
    pub standard_error: f64,
    /// Bootstrap percentile interval at the requested level.
    pub ci_low: f64,
    pub ci_high: f64,
    pub samples: usize,
    pub dead: usize,
    pub infinite: bool,
    pub lpq_norm: Option<f64>,
}

struct PathIntegral<'a> {
    f: ScalarField<'a>,
    h: f64,
}

impl PathObserver for PathIntegral<'_> {
    type State = (f64, f64);

    fn start(&self, _particle: usize, _x: &[f64], y: &[f64]) -> (f64, f64) {
        let v = (self.f)(0.0, y);
        (0.0, v * v)
    }

    fn step(&self, s: &mut (f64, f64), _k: usize, t_next: f64, _x: &[f64], y: &[f64], _dw: &[f64]) {
        let v = (self.f)(t_next, y);
        let cur = v * v;
        s.0 += 0.5 * self.h * (s.1 + cur);
        s.1 = cur;
    }
}

/// Per-path trapezoid integrals of `|f|^2`, one per alive particle.
pub fn khasminskii_integrals(
    cfg: &SimConfig,
    coeffs: &CoefficientSet,
    init: &InitialLaw,
    f: ScalarField,
) -> Result<(Vec<f64>, usize), IntegratorError> {
    let obs = PathIntegral { f, h: cfg.step };
    let (ens, states) = simulate_observed(cfg, coeffs, init, None, SimOptions::default(), &obs)?;
    let integrals = states
        .iter()
        .zip(&ens.alive)
        .filter(|(_, a)| **a)
        .map(|(s, _)| s.0)
        .collect();
    Ok((integrals, ens.dead_count()))
}

/// Estimates the exponential moment with a bootstrap confidence interval of
/// level `confidence` from `resamples` resamples.
pub fn khasminskii_estimate(
    cfg: &SimConfig,
    coeffs: &CoefficientSet,
    init: &InitialLaw,
    f: ScalarField,
    resamples: usize,
    confidence: f64,
    norm: Option<&NormRequest>,
) -> Result<KhasminskiiEstimate, IntegratorError> {
    let (integrals, dead) = khasminskii_integrals(cfg, coeffs, init, f)?;
    let lpq_norm = match norm {
        Some(req) => Some(
            localized_lpq_norm(f, &req.pair, cfg.horizon, &req.grid, &req.centers)
                .map_err(|e| IntegratorError::Invalid(e.to_string()))?
                .value,
        ),
        None => None,
    };
    let values: Vec<f64> = integrals.iter().map(|v| v.exp()).collect();
    let samples = values.len();
    if samples == 0 {
        return Err(IntegratorError::Invalid("no surviving paths".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Ok(KhasminskiiEstimate {
            estimate: f64::INFINITY,
            standard_error: f64::INFINITY,
            ci_low: f64::INFINITY,
            ci_high: f64::INFINITY,
            samples,
            dead,
            infinite: true,
            lpq_norm,
        });
    }
    let estimate = mean(&values);
    let se = if samples > 1 { standard_error(&values) } else { 0.0 };
    let mut rng = stream_rng(derive_seed(cfg.seed, salt::BOOTSTRAP), 0);
    let boot: Vec<f64> = (0..resamples.max(1))
        .map(|_| {
            let mut acc = 0.0;
            for _ in 0..samples {
                acc += values[rng.random_range(0..samples)];
            }
            acc / samples as f64
        })
        .collect();
    let tail = 0.5 * (1.0 - confidence);
    Ok(KhasminskiiEstimate {
        estimate,
        standard_error: se,
        ci_low: percentile(&boot, tail),
        ci_high: percentile(&boot, 1.0 - tail),
        samples,
        dead,
        infinite: false,
        lpq_norm,
    })
}
