//! One-dimensional Zvonkin transform.
//!
//! For `d2 = 1` the resolvent equation `1/2 sigma^2 u'' + b u' - lambda u = -b`
//! is solved on `[-L, L]` with `u(+-L) = 0`. With `Theta(y) = y + u(y)` the
//! process `Y~ = Theta(Y)` solves an SDE without the singular drift:
//!
//! ```text
//! Z2~(x, y~)  = (1 + u'(y)) Z2(x, y) + lambda u(y)
//! sigma~(y~)  = (1 + u'(y)) sigma(y),      y = Theta^{-1}(y~)
//! ```
//!
//! and `Z1~(x, y~) = Z1(x, y)`. Only the time-homogeneous equation is solved.

use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ergodicity::{bootstrap_noise_floor, law_var_distance, VWeight};
use crate::integrators::{simulate_ensemble, InitialLaw, IntegratorError, SimOptions, UNSTABLE_FRACTION};
use crate::law::EmpiricalLaw;
use crate::model::{CoefficientSet, PhaseState, SigmaBounds, SimConfig, SpaceField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ZvonkinError {
    #[error("degenerate discretization")]
    Degenerate,
    #[error("not converged: residual {residual:e} exceeds tolerance {tolerance:e}")]
    NotConverged { residual: f64, tolerance: f64 },
    #[error("smallness not achieved: |u| + |u'| = {bound} at lambda = {lambda}")]
    SmallnessNotAchieved { lambda: f64, bound: f64 },
    #[error("|u'| = {0} is not below 1; Theta is not invertible")]
    NotInvertible(f64),
    #[error("out of transform domain: {hits} of {particles} particles left Theta([-L, L])")]
    OutOfDomain { hits: usize, particles: usize },
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Relative residual tolerance of the discrete solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

/// Largest resolvent parameter tried by [`lambda_sweep`].
pub const MAX_LAMBDA: f64 = 1_099_511_627_776.0;

/// Discrete solution on a uniform grid of `[-L, L]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZvonkinSolution {
    pub grid: Vec<f64>,
    pub spacing: f64,
    pub lambda: f64,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub d2u: Vec<f64>,
    /// Max-norm residual of the discrete equation.
    pub residual: f64,
    /// `max |u| + max |u'|`.
    pub bound: f64,
    pub theta: Vec<f64>,
}

impl ZvonkinSolution {
    pub fn sup_u(&self) -> f64 {
        self.u.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_du(&self) -> f64 {
        self.du.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_identity(&self) -> bool {
        self.u.iter().all(|v| *v == 0.0)
    }

    pub fn half_width(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    fn locate(&self, y: f64) -> Option<(usize, f64)> {
        let l = self.half_width();
        if !(y >= -l && y <= l) {
            return None;
        }
        let s = (y + l) / self.spacing;
        let i = (s.floor() as usize).min(self.grid.len() - 2);
        Some((i, (y - self.grid[i]) / self.spacing))
    }

    fn interp(table: &[f64], i: usize, f: f64) -> f64 {
        if f == 0.0 {
            table[i]
        } else {
            table[i] + f * (table[i + 1] - table[i])
        }
    }

    /// Piecewise linear `u(y)`; `None` outside `[-L, L]`.
    pub fn u_at(&self, y: f64) -> Option<f64> {
        self.locate(y).map(|(i, f)| Self::interp(&self.u, i, f))
    }

    pub fn du_at(&self, y: f64) -> Option<f64> {
        self.locate(y).map(|(i, f)| Self::interp(&self.du, i, f))
    }

    /// `Theta(y) = y + u(y)`.
    pub fn theta_at(&self, y: f64) -> Option<f64> {
        self.u_at(y).map(|u| y + u)
    }

    /// Monotone piecewise linear inverse of the `(Theta(y_i), y_i)` table.
    pub fn theta_inverse(&self, z: f64) -> Option<f64> {
        let n = self.theta.len();
        if !(z >= self.theta[0] && z <= self.theta[n - 1]) {
            return None;
        }
        let j = self.theta.partition_point(|t| *t <= z);
        if j == 0 {
            return Some(self.grid[0]);
        }
        let i = j - 1;
        if self.theta[i] == z || i == n - 1 {
            return Some(self.grid[i]);
        }
        let f = (z - self.theta[i]) / (self.theta[i + 1] - self.theta[i]);
        Some(self.grid[i] + f * self.spacing)
    }

    /// `min_i Theta(y_{i+1}) - Theta(y_i)`.
    pub fn min_theta_gap(&self) -> f64 {
        self.theta.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
    }

    /// `y,u,du,d2u,theta` rows.
    pub fn csv(&self) -> String {
        let mut s = String::from("y,u,du,d2u,theta\n");
        for i in 0..self.grid.len() {
            let _ = writeln!(
                s,
                "{:?},{:?},{:?},{:?},{:?}",
                self.grid[i], self.u[i], self.du[i], self.d2u[i], self.theta[i]
            );
        }
        s
    }
}

/// Solves a tridiagonal system in place (Thomas algorithm). `lower[0]` and
/// `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>, ZvonkinError> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut pivot = diag[0];
    if pivot == 0.0 || !pivot.is_finite() {
        return Err(ZvonkinError::Degenerate);
    }
    c[0] = upper[0] / pivot;
    d[0] = rhs[0] / pivot;
    for i in 1..n {
        pivot = diag[i] - lower[i] * c[i - 1];
        if pivot == 0.0 || !pivot.is_finite() {
            return Err(ZvonkinError::Degenerate);
        }
        c[i] = if i + 1 < n { upper[i] / pivot } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / pivot;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

fn half_sigma_sq(sigma: &dyn SpaceField, y: f64, m: usize) -> f64 {
    let mut s = vec![0.0; m];
    sigma.eval(0.0, &[y], &mut s);
    0.5 * s.iter().map(|v| v * v).sum::<f64>()
}

/// Central-difference solve of `1/2 sigma^2 u'' + b u' - lambda u = -b` with
/// `u(+-half_width) = 0` on `points` grid nodes. `m` is the noise dimension.
pub fn solve_resolvent_1d(
    b: &dyn SpaceField,
    sigma: &dyn SpaceField,
    m: usize,
    lambda: f64,
    half_width: f64,
    points: usize,
) -> Result<ZvonkinSolution, ZvonkinError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(ZvonkinError::Invalid(format!("lambda must be positive, got {lambda}")));
    }
    if !(half_width > 0.0) || points < 5 {
        return Err(ZvonkinError::Invalid(
            "need a positive half width and at least 5 grid points".into(),
        ));
    }
    let n = points;
    let h = 2.0 * half_width / (n - 1) as f64;
    let grid: Vec<f64> = (0..n)
        .map(|i| {
            if i == n - 1 {
                half_width
            } else {
                -half_width + i as f64 * h
            }
        })
        .collect();
    let mut bv = vec![0.0; n];
    let mut sv = vec![0.0; n];
    for i in 0..n {
        let mut out = [0.0];
        b.eval(0.0, &[grid[i]], &mut out);
        bv[i] = out[0];
        sv[i] = half_sigma_sq(sigma, grid[i], m);
        if !(sv[i] > 0.0) || !bv[i].is_finite() {
            return Err(ZvonkinError::Invalid(format!(
                "degenerate coefficients at y = {}",
                grid[i]
            )));
        }
    }
    let k = n - 2;
    let mut lower = vec![0.0; k];
    let mut diag = vec![0.0; k];
    let mut upper = vec![0.0; k];
    let mut rhs = vec![0.0; k];
    for j in 0..k {
        let i = j + 1;
        let a = sv[i] / (h * h);
        let c = bv[i] / (2.0 * h);
        lower[j] = a - c;
        diag[j] = -2.0 * a - lambda;
        upper[j] = a + c;
        rhs[j] = -bv[i];
    }
    let inner = solve_tridiagonal(&lower, &diag, &upper, &rhs)?;
    let mut u = vec![0.0; n];
    u[1..n - 1].copy_from_slice(&inner);
    let mut residual = 0.0f64;
    for j in 0..k {
        let i = j + 1;
        let r = lower[j] * u[i - 1] + diag[j] * u[i] + upper[j] * u[i + 1] - rhs[j];
        residual = residual.max(r.abs());
    }
    let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tolerance = RESIDUAL_TOLERANCE * scale;
    if !(residual <= tolerance) {
        return Err(ZvonkinError::NotConverged { residual, tolerance });
    }
    let mut du = vec![0.0; n];
    let mut d2u = vec![0.0; n];
    for i in 1..n - 1 {
        du[i] = (u[i + 1] - u[i - 1]) / (2.0 * h);
        d2u[i] = (u[i + 1] - 2.0 * u[i] + u[i - 1]) / (h * h);
    }
    du[0] = (-3.0 * u[0] + 4.0 * u[1] - u[2]) / (2.0 * h);
    du[n - 1] = (3.0 * u[n - 1] - 4.0 * u[n - 2] + u[n - 3]) / (2.0 * h);
    d2u[0] = d2u[1];
    d2u[n - 1] = d2u[n - 2];
    let theta = grid.iter().zip(&u).map(|(y, v)| y + v).collect();
    let mut sol = ZvonkinSolution {
        grid,
        spacing: h,
        lambda,
        u,
        du,
        d2u,
        residual,
        bound: 0.0,
        theta,
    };
    sol.bound = sol.sup_u() + sol.sup_du();
    Ok(sol)
}

/// Solutions tried by [`lambda_sweep`], ending with the first success.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaSweep {
    pub solution: ZvonkinSolution,
    /// `(lambda, |u| + |u'|)` for every solve.
    pub history: Vec<(f64, f64)>,
}

/// Doubles `lambda` from 1 until `|u| + |u'| < target` or `lambda > 2^40`.
pub fn lambda_sweep(
    b: &dyn SpaceField,
    sigma: &dyn SpaceField,
    m: usize,
    target: f64,
    half_width: f64,
    points: usize,
) -> Result<LambdaSweep, ZvonkinError> {
    if !(target > 0.0 && target < 1.0) {
        return Err(ZvonkinError::Invalid(format!(
            "target must lie in (0, 1), got {target}"
        )));
    }
    let mut history = Vec::new();
    let mut lambda = 1.0;
    let mut last = f64::NAN;
    while lambda <= MAX_LAMBDA {
        let sol = solve_resolvent_1d(b, sigma, m, lambda, half_width, points)?;
        history.push((lambda, sol.bound));
        last = sol.bound;
        if sol.bound < target {
            return Ok(LambdaSweep { solution: sol, history });
        }
        lambda *= 2.0;
    }
    Err(ZvonkinError::SmallnessNotAchieved {
        lambda: lambda / 2.0,
        bound: last,
    })
}

/// Maximal interpolation error accepted by the `Theta^{-1}(Theta(y_i)) = y_i` check.
pub const ROUNDTRIP_TOLERANCE: f64 = 1e-8;

/// Coefficients of `Y~ = Theta(Y)`; the singular drift is absorbed and the
/// transformed set has `b = 0`. Outside `Theta([-L, L])` every field
/// evaluates to NaN, so particles leaving the domain die.
pub fn transform_coefficients(sol: &ZvonkinSolution, coeffs: &CoefficientSet) -> Result<CoefficientSet, ZvonkinError> {
    let dims = coeffs.dims();
    if dims.d2 != 1 {
        return Err(ZvonkinError::Invalid("the transform is implemented for d2 = 1".into()));
    }
    let sup_du = sol.sup_du();
    if !(sup_du < 1.0) {
        return Err(ZvonkinError::NotInvertible(sup_du));
    }
    for (y, t) in sol.grid.iter().zip(&sol.theta) {
        let back = sol.theta_inverse(*t).ok_or(ZvonkinError::NotInvertible(sup_du))?;
        if (back - y).abs() >= ROUNDTRIP_TOLERANCE {
            return Err(ZvonkinError::NotInvertible(sup_du));
        }
    }
    if sol.is_identity() {
        return Ok(coeffs.clone());
    }
    let sol = Arc::new(sol.clone());
    let lambda = sol.lambda;
    let pull = {
        let sol = sol.clone();
        move |z: f64| -> Option<(f64, f64, f64)> {
            let y = sol.theta_inverse(z)?;
            Some((y, sol.u_at(y)?, sol.du_at(y)?))
        }
    };
    let pull = Arc::new(pull);
    let z1 = coeffs.z1_field().clone();
    let p1 = pull.clone();
    let new_z1 = move |t: f64, x: &[f64], y: &[f64], out: &mut [f64]| match p1(y[0]) {
        Some((yy, _, _)) => z1.eval(t, x, &[yy], out),
        None => out.iter_mut().for_each(|v| *v = f64::NAN),
    };
    let z2 = coeffs.z2_base_field().clone();
    let p2 = pull.clone();
    let new_z2 = move |t: f64, x: &[f64], y: &[f64], out: &mut [f64]| match p2(y[0]) {
        Some((yy, u, du)) => {
            z2.eval(t, x, &[yy], out);
            out[0] = (1.0 + du) * out[0] + lambda * u;
        }
        None => out[0] = f64::NAN,
    };
    let sigma = coeffs.sigma_field().clone();
    let p3 = pull;
    let new_sigma = move |t: f64, y: &[f64], out: &mut [f64]| match p3(y[0]) {
        Some((yy, _, du)) => {
            sigma.eval(t, &[yy], out);
            out.iter_mut().for_each(|v| *v *= 1.0 + du);
        }
        None => out.iter_mut().for_each(|v| *v = f64::NAN),
    };
    let bounds = coeffs.sigma_bounds();
    let new_bounds = SigmaBounds {
        sup: bounds.sup * (1.0 + sup_du),
        inverse_sup: bounds.inverse_sup / ((1.0 - sup_du) * (1.0 - sup_du)),
    };
    Ok(coeffs
        .clone()
        .with_z1(Arc::new(new_z1))
        .with_z2(Arc::new(new_z2))
        .with_sigma(Arc::new(new_sigma), new_bounds)
        .with_b(Arc::new(crate::fields::basic::ConstantSpace::zeros(1))))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceOptions {
    pub target: f64,
    pub half_width: f64,
    pub points: usize,
    pub resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub lambda: f64,
    pub bound: f64,
    pub tv: f64,
    pub noise_floor: f64,
    pub out_of_domain: usize,
    pub direct_dead: usize,
    pub equivalent: bool,
}

/// Simulates the original system and the transformed one from `Theta` of the
/// same initial draws with common noise, maps the transformed terminal
/// states back through `Theta^{-1}` and compares the terminal laws.
pub fn equivalence_experiment(
    coeffs: &CoefficientSet,
    cfg: &SimConfig,
    init: &InitialLaw,
    opts: &EquivalenceOptions,
) -> Result<EquivalenceReport, ZvonkinError> {
    let dims = coeffs.dims();
    if dims.d2 != 1 {
        return Err(ZvonkinError::Invalid("the transform is implemented for d2 = 1".into()));
    }
    let sweep = lambda_sweep(
        coeffs.b_field().as_ref(),
        coeffs.sigma_field().as_ref(),
        dims.m,
        opts.target,
        opts.half_width,
        opts.points,
    )?;
    let sol = sweep.solution;
    let transformed = transform_coefficients(&sol, coeffs)?;
    let start = init.empirical(cfg.seed, cfg.particles);
    let mapped: Vec<PhaseState> = (0..start.len())
        .map(|i| {
            let y = sol.theta_at(start.y(i)[0]).ok_or(ZvonkinError::OutOfDomain {
                hits: 1,
                particles: cfg.particles,
            })?;
            PhaseState::new(start.x(i).to_vec(), vec![y]).map_err(|e| ZvonkinError::Invalid(e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let direct = simulate_ensemble(cfg, coeffs, init, None, SimOptions::default())?;
    let trans = simulate_ensemble(
        cfg,
        &transformed,
        &InitialLaw::Points(mapped),
        None,
        SimOptions::default(),
    )?;
    let out_of_domain = trans.dead_count();
    if out_of_domain as f64 > UNSTABLE_FRACTION * cfg.particles as f64 {
        return Err(ZvonkinError::OutOfDomain {
            hits: out_of_domain,
            particles: cfg.particles,
        });
    }
    let mut alive = trans.alive.clone();
    let mut back = trans.y.clone();
    for (i, v) in back.iter_mut().enumerate() {
        if alive[i] {
            match sol.theta_inverse(*v) {
                Some(y) => *v = y,
                None => alive[i] = false,
            }
        }
    }
    let trans_law = EmpiricalLaw::from_states(dims.d1, 1, &trans.x, &back, &alive, None);
    let direct_law = direct.final_law();
    let tv = law_var_distance(&direct_law, &trans_law, &cfg.histogram);
    let noise_floor = bootstrap_noise_floor(
        &direct_law,
        &cfg.histogram,
        cfg.particles,
        opts.resamples,
        &VWeight::Unit,
        cfg.seed,
    );
    Ok(EquivalenceReport {
        lambda: sol.lambda,
        bound: sol.bound,
        tv,
        noise_floor,
        out_of_domain,
        direct_dead: direct.dead_count(),
        equivalent: tv < 3.0 * noise_floor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::basic::{ConstantSpace, ScaledIdentity};
    use crate::model::Dims;

    #[test]
    fn zero_drift_gives_zero_solution() {
        let s = solve_resolvent_1d(
            &ConstantSpace::zeros(1),
            &ScaledIdentity::new(1.0, 1, 1),
            1,
            1.0,
            5.0,
            101,
        )
        .unwrap();
        assert!(s.is_identity());
        assert_eq!(s.bound, 0.0);
        let sw = lambda_sweep(
            &ConstantSpace::zeros(1),
            &ScaledIdentity::new(1.0, 1, 1),
            1,
            0.1,
            5.0,
            101,
        )
        .unwrap();
        assert_eq!(sw.solution.lambda, 1.0);
    }

    #[test]
    fn tridiagonal_matches_dense_product() {
        let lower = [0.0, 1.0, -2.0, 0.5];
        let diag = [4.0, 5.0, 6.0, 3.0];
        let upper = [1.0, 0.5, 1.0, 0.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs).unwrap();
        for i in 0..4 {
            let mut r = diag[i] * x[i];
            if i > 0 {
                r += lower[i] * x[i - 1];
            }
            if i < 3 {
                r += upper[i] * x[i + 1];
            }
            assert!((r - rhs[i]).abs() < 1e-14);
        }
        assert_eq!(
            solve_tridiagonal(&[0.0], &[0.0], &[0.0], &[1.0]),
            Err(ZvonkinError::Degenerate)
        );
    }

    #[test]
    fn inverse_roundtrip_and_monotone() {
        let s = solve_resolvent_1d(
            &ConstantSpace::new(vec![1.0]),
            &ScaledIdentity::new(1.0, 1, 1),
            1,
            4.0,
            6.0,
            301,
        )
        .unwrap();
        assert!(s.sup_du() < 1.0);
        assert!(s.min_theta_gap() > 0.0);
        for (y, t) in s.grid.iter().zip(&s.theta) {
            assert!((s.theta_inverse(*t).unwrap() - y).abs() < 1e-12);
        }
        assert!(s.theta_inverse(s.theta[0] - 1.0).is_none());
    }

    #[test]
    fn identity_transform_keeps_coefficients() {
        let c = crate::fields::basic::linear_langevin(1, 1.0);
        let s = solve_resolvent_1d(
            &ConstantSpace::zeros(1),
            &ScaledIdentity::new(2f64.sqrt(), 1, 1),
            1,
            1.0,
            5.0,
            51,
        )
        .unwrap();
        let t = transform_coefficients(&s, &c).unwrap();
        let (mut a, mut b, mut sc) = ([0.0], [0.0], [0.0]);
        c.eval_z2(0.0, &[0.3], &[-0.7], None, &mut a, &mut sc);
        t.eval_z2(0.0, &[0.3], &[-0.7], None, &mut b, &mut sc);
        assert_eq!(a, b);
        assert_eq!(t.dims(), Dims::kinetic(1));
    }
}
