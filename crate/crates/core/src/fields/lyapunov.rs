use serde::{Deserialize, Serialize};

use super::FieldError;
use crate::model::PhaseState;

/// `V(x, y) = (1 + |x|^2 + |y|^2)^theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovV {
    theta: f64,
    d1: usize,
    d2: usize,
}

/// Value and derivative blocks of `V` at one point. Matrices are row-major:
/// `hess_xy` is `d1 x d2`, `hess_yy` is `d2 x d2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovEval {
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_y: Vec<f64>,
    pub hess_xy: Vec<f64>,
    pub hess_yy: Vec<f64>,
}

impl LyapunovV {
    pub fn new(theta: f64, d1: usize, d2: usize) -> Result<Self, FieldError> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(FieldError::InvalidParameter(format!(
                "theta must be positive, got {theta}"
            )));
        }
        Ok(Self { theta, d1, d2 })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    fn base(x: &[f64], y: &[f64]) -> f64 {
        1.0 + x.iter().map(|v| v * v).sum::<f64>() + y.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        Self::base(x, y).powf(self.theta)
    }

    /// Value at a concatenated point `[x, y]`.
    pub fn value_at(&self, point: &[f64]) -> f64 {
        Self::base(point, &[]).powf(self.theta)
    }

    /// `(a, c)` with `grad = a z` and `hess = a I + c z z^T`.
    fn coefficients(&self, s: f64) -> (f64, f64) {
        let t = self.theta;
        (2.0 * t * s.powf(t - 1.0), 4.0 * t * (t - 1.0) * s.powf(t - 2.0))
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> LyapunovEval {
        let s = Self::base(x, y);
        let (a, c) = self.coefficients(s);
        let (d1, d2) = (x.len(), y.len());
        let mut hess_xy = vec![0.0; d1 * d2];
        for i in 0..d1 {
            for j in 0..d2 {
                hess_xy[i * d2 + j] = c * x[i] * y[j];
            }
        }
        let mut hess_yy = vec![0.0; d2 * d2];
        for i in 0..d2 {
            for j in 0..d2 {
                hess_yy[i * d2 + j] = c * y[i] * y[j] + if i == j { a } else { 0.0 };
            }
        }
        LyapunovEval {
            value: s.powf(self.theta),
            grad_x: x.iter().map(|v| a * v).collect(),
            grad_y: y.iter().map(|v| a * v).collect(),
            hess_xy,
            hess_yy,
        }
    }

    /// `|grad_y V|`.
    pub fn grad_y_norm(&self, x: &[f64], y: &[f64]) -> f64 {
        let (a, _) = self.coefficients(Self::base(x, y));
        a.abs() * norm(y)
    }

    /// Operator norm of the mixed block, `|c| |x| |y|` (rank one).
    pub fn hess_xy_norm(&self, x: &[f64], y: &[f64]) -> f64 {
        let (_, c) = self.coefficients(Self::base(x, y));
        c.abs() * norm(x) * norm(y)
    }

    /// Operator norm of `a I + c y y^T`: eigenvalues `a` (multiplicity
    /// `d2 - 1`) and `a + c |y|^2`.
    pub fn hess_yy_norm(&self, x: &[f64], y: &[f64]) -> f64 {
        let (a, c) = self.coefficients(Self::base(x, y));
        let radial = (a + c * y.iter().map(|v| v * v).sum::<f64>()).abs();
        if y.len() >= 2 {
            radial.max(a.abs())
        } else {
            radial
        }
    }
}

/// Value and derivative blocks of `V` at `s`.
pub fn lyapunov_eval(v: &LyapunovV, s: &PhaseState) -> LyapunovEval {
    v.eval(s.x(), s.y())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Rate function in the drift condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PhiFamily {
    /// `c0 r`
    Linear { c0: f64 },
    /// `c0 (1 + r^{1 + beta})`
    Superlinear { c0: f64, beta: f64 },
}

impl PhiFamily {
    pub fn c0(&self) -> f64 {
        match *self {
            PhiFamily::Linear { c0 } | PhiFamily::Superlinear { c0, .. } => c0,
        }
    }

    /// Same kind with a different `c0`.
    pub fn with_c0(&self, c0: f64) -> Self {
        match *self {
            PhiFamily::Linear { .. } => PhiFamily::Linear { c0 },
            PhiFamily::Superlinear { beta, .. } => PhiFamily::Superlinear { c0, beta },
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        phi_eval(self, r)
    }
}

pub fn phi_eval(phi: &PhiFamily, r: f64) -> f64 {
    match *phi {
        PhiFamily::Linear { c0 } => c0 * r,
        PhiFamily::Superlinear { c0, beta } => c0 * (1.0 + r.powf(1.0 + beta)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_values() {
        let v = LyapunovV::new(1.0, 1, 1).unwrap();
        let e = v.eval(&[0.0], &[0.0]);
        assert_eq!(e.value, 1.0);
        assert_eq!(e.grad_x, vec![0.0]);
        assert_eq!(e.grad_y, vec![0.0]);
        assert_eq!(e.hess_yy, vec![2.0]);
        let v2 = LyapunovV::new(1.0, 2, 2).unwrap();
        assert_eq!(v2.eval(&[0.0, 0.0], &[0.0, 0.0]).hess_yy, vec![2.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn lattice_point() {
        let v = LyapunovV::new(1.0, 1, 1).unwrap();
        let e = v.eval(&[1.0], &[0.0]);
        assert_eq!(e.value, 2.0);
        assert_eq!(e.grad_x, vec![2.0]);
        assert_eq!(e.hess_xy, vec![0.0]);
    }

    #[test]
    fn operator_norms_match_blocks() {
        let v = LyapunovV::new(2.0, 2, 2).unwrap();
        let (x, y) = ([0.3, -1.2], [0.7, 0.4]);
        let e = v.eval(&x, &y);
        let m = nalgebra::DMatrix::from_row_slice(2, 2, &e.hess_yy);
        let svd = m.singular_values();
        assert!((svd.max() - v.hess_yy_norm(&x, &y)).abs() < 1e-10);
        let mx = nalgebra::DMatrix::from_row_slice(2, 2, &e.hess_xy);
        assert!((mx.singular_values().max() - v.hess_xy_norm(&x, &y)).abs() < 1e-10);
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi_eval(&PhiFamily::Linear { c0: 2.0 }, 3.0), 6.0);
        assert_eq!(phi_eval(&PhiFamily::Superlinear { c0: 1.0, beta: 1.0 }, 0.0), 1.0);
        assert_eq!(phi_eval(&PhiFamily::Superlinear { c0: 1.0, beta: 1.0 }, 2.0), 5.0);
    }
}
