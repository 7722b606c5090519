use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Ensemble, IntegratorError};
use crate::law::EmpiricalLaw;
use crate::model::SpaceField;
use crate::stats::{mean, standard_error, sum, NeumaierSum};

/// Drift shift `xi(t_k, x, y) in R^m` along a path; `step` is the grid index.
pub trait ShiftField: Sync {
    fn eval(&self, step: usize, t: f64, x: &[f64], y: &[f64], out: &mut [f64]);
}

/// `xi = c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantShift(pub Vec<f64>);

impl ShiftField for ConstantShift {
    fn eval(&self, _step: usize, _t: f64, _x: &[f64], _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.0);
    }
}

/// Drift difference function `(step, t, x, y, out)` writing into `R^{d2}`.
pub type DriftDifference = Arc<dyn Fn(usize, f64, &[f64], &[f64], &mut [f64]) + Send + Sync>;

/// `xi = sigma^T (sigma sigma^T)^{-1} Delta` for a drift difference `Delta`.
pub struct DriftShift {
    delta: DriftDifference,
    sigma: Arc<dyn SpaceField>,
    d2: usize,
    m: usize,
}

impl DriftShift {
    pub fn new(delta: DriftDifference, sigma: Arc<dyn SpaceField>, d2: usize, m: usize) -> Self {
        Self { delta, sigma, d2, m }
    }
}

impl ShiftField for DriftShift {
    fn eval(&self, step: usize, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        let mut diff = vec![0.0; self.d2];
        (self.delta)(step, t, x, y, &mut diff);
        let mut s = vec![0.0; self.d2 * self.m];
        self.sigma.eval(t, y, &mut s);
        diffusion_solve(&s, self.d2, self.m, &diff, out);
    }
}

/// Writes `sigma^T (sigma sigma^T)^{-1} diff` for a row-major `d2 x m` matrix;
/// NaN when `sigma sigma^T` is singular.
pub fn diffusion_solve(sigma: &[f64], d2: usize, m: usize, diff: &[f64], out: &mut [f64]) {
    if d2 == 1 && m == 1 {
        out[0] = diff[0] / sigma[0];
        return;
    }
    let s = DMatrix::from_row_slice(d2, m, sigma);
    let gram = &s * s.transpose();
    match gram.try_inverse() {
        Some(inv) => {
            let xi = s.transpose() * inv * DVector::from_column_slice(diff);
            out.copy_from_slice(xi.as_slice());
        }
        None => out.iter_mut().for_each(|v| *v = f64::NAN),
    }
}

/// Running `log R = sum <xi_k, dW_k> - 1/2 int |xi|^2 ds` with the stochastic
/// integral at the left point and the quadratic term by the trapezoid rule.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct GirsanovAccumulator {
    log_weight: f64,
    energy: f64,
}

impl GirsanovAccumulator {
    /// Adds one step with shift `xi_left` at the start, `|xi|^2` at the end,
    /// and increment `dw`.
    pub fn advance(&mut self, xi_left: &[f64], xi_right_sq: f64, dw: &[f64], h: f64) {
        let mut ito = 0.0;
        let mut left_sq = 0.0;
        for (a, b) in xi_left.iter().zip(dw) {
            ito += a * b;
            left_sq += a * a;
        }
        let quad = 0.5 * h * (left_sq + xi_right_sq);
        self.log_weight += ito - 0.5 * quad;
        self.energy += quad;
    }

    pub fn log_weight(&self) -> f64 {
        self.log_weight
    }

    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }

    /// `int_0^t |xi|^2 ds` so far.
    pub fn energy(&self) -> f64 {
        self.energy
    }
}

/// Log-weight and accumulated `int |xi|^2` of one particle at every grid step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovTrace {
    pub log_weight: Vec<f64>,
    pub energy: Vec<f64>,
}

/// Accumulates the Girsanov weights of every particle along its stored path.
/// Dead particles get NaN traces.
pub fn girsanov_traces(ensemble: &Ensemble, shift: &dyn ShiftField) -> Result<Vec<GirsanovTrace>, IntegratorError> {
    let paths = ensemble.paths.as_ref().ok_or(IntegratorError::MissingPaths)?;
    if paths.first().is_some_and(|p| p.increments.is_none()) {
        return Err(IntegratorError::MissingPaths);
    }
    let dims = ensemble.config.dims;
    let h = ensemble.config.step;
    let traces = paths
        .par_iter()
        .zip(ensemble.alive.par_iter())
        .map(|(p, alive)| {
            let k = p.len() - 1;
            if !alive {
                return GirsanovTrace {
                    log_weight: vec![f64::NAN; k + 1],
                    energy: vec![f64::NAN; k + 1],
                };
            }
            let mut acc = GirsanovAccumulator::default();
            let mut log_weight = Vec::with_capacity(k + 1);
            let mut energy = Vec::with_capacity(k + 1);
            log_weight.push(0.0);
            energy.push(0.0);
            let mut left = vec![0.0; dims.m];
            let mut right = vec![0.0; dims.m];
            let s0 = p.state(0);
            shift.eval(0, p.times[0], &s0[..dims.d1], &s0[dims.d1..], &mut left);
            for j in 0..k {
                let s = p.state(j + 1);
                shift.eval(j + 1, p.times[j + 1], &s[..dims.d1], &s[dims.d1..], &mut right);
                let right_sq: f64 = right.iter().map(|v| v * v).sum();
                acc.advance(&left, right_sq, p.increment(j).expect("increments stored"), h);
                log_weight.push(acc.log_weight());
                energy.push(acc.energy());
                std::mem::swap(&mut left, &mut right);
            }
            GirsanovTrace { log_weight, energy }
        })
        .collect();
    Ok(traces)
}

/// Weight diagnostics at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub mean_weight: f64,
    pub weight_se: f64,
    pub second_moment: f64,
    pub second_moment_se: f64,
    pub ess: f64,
    /// `E_Q[1/2 int |xi|^2]`, the relative entropy of the shifted path law.
    pub kl_estimate: f64,
    /// `sqrt(2 KL)`, a bound on the variation distance (range `[0, 2]`).
    pub pinsker_bound: f64,
}

/// Statistics of `R = exp(log_weight)` over the finite entries.
pub fn weight_stats(log_weights: &[f64], energies: &[f64]) -> WeightStats {
    let mut r = Vec::with_capacity(log_weights.len());
    let mut e = Vec::with_capacity(log_weights.len());
    for (lw, en) in log_weights.iter().zip(energies) {
        if lw.is_finite() {
            r.push(lw.exp());
            e.push(*en);
        }
    }
    let r2: Vec<f64> = r.iter().map(|v| v * v).collect();
    let total = sum(&r);
    let total_sq = sum(&r2);
    let mut weighted_energy = NeumaierSum::default();
    for (w, en) in r.iter().zip(&e) {
        weighted_energy.add(w * 0.5 * en);
    }
    let kl = (weighted_energy.sum() / total).max(0.0);
    WeightStats {
        mean_weight: mean(&r),
        weight_se: standard_error(&r),
        second_moment: mean(&r2),
        second_moment_se: standard_error(&r2),
        ess: total * total / total_sq,
        kl_estimate: kl,
        pinsker_bound: (2.0 * kl).sqrt(),
    }
}

/// Importance-sampling estimate of the shifted dynamics' terminal law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GirsanovReport {
    pub law: EmpiricalLaw,
    pub stats: WeightStats,
    pub log_weights: Vec<f64>,
}

/// Reweights the reference ensemble's terminal states by `R_T`.
pub fn girsanov_weighted_law(ensemble: &Ensemble, shift: &dyn ShiftField) -> Result<GirsanovReport, IntegratorError> {
    let traces = girsanov_traces(ensemble, shift)?;
    let log_weights: Vec<f64> = traces.iter().map(|t| *t.log_weight.last().unwrap()).collect();
    let energies: Vec<f64> = traces.iter().map(|t| *t.energy.last().unwrap()).collect();
    if ensemble
        .alive
        .iter()
        .zip(&log_weights)
        .any(|(a, lw)| *a && !lw.is_finite())
    {
        return Err(IntegratorError::Invalid(
            "non-finite Girsanov weight (singular diffusion?)".into(),
        ));
    }
    let stats = weight_stats(&log_weights, &energies);
    let n = ensemble.len();
    if !(stats.ess >= 0.01 * n as f64) {
        return Err(IntegratorError::DegenerateReweighting { ess: stats.ess, n });
    }
    let dims = ensemble.config.dims;
    let weights: Vec<f64> = log_weights
        .iter()
        .zip(&ensemble.alive)
        .filter(|(_, a)| **a)
        .map(|(lw, _)| lw.exp())
        .collect();
    let law = EmpiricalLaw::from_states(dims.d1, dims.d2, &ensemble.x, &ensemble.y, &ensemble.alive, None)
        .with_weights(weights);
    Ok(GirsanovReport {
        law,
        stats,
        log_weights,
    })
}
