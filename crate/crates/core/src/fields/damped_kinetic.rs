use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::FieldError;
use crate::fields::basic::ScaledIdentity;
use crate::model::{CoefficientSet, Dims, Growth, SigmaBounds};

/// Bounded smooth perturbation `Z(x, y)` added to the velocity drift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Perturbation {
    None,
    /// `Z_i(x, y) = scale * sin(x_i)`: bounded, hence `o(|(x, y)|)`.
    Sine {
        scale: f64,
    },
}

/// Damped kinetic drift
/// `Z1 = -c1 (1 + |x|)^delta x + c2 y`, `Z2 = Z(x, y) - c3 (1 + |y|)^delta y`
/// with `x, y` of equal dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampedKinetic {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub delta: f64,
    pub perturbation: Perturbation,
}

impl DampedKinetic {
    /// Requires `c1 > 0`, `c3 > 0`, `delta >= 0`.
    pub fn new(c1: f64, c2: f64, c3: f64, delta: f64) -> Result<Self, FieldError> {
        if !(c1 > 0.0 && c3 > 0.0 && delta >= 0.0 && c2.is_finite() && c1.is_finite() && c3.is_finite()) {
            return Err(FieldError::InvalidParameter(format!(
                "need c1 > 0, c3 > 0, delta >= 0 (got c1 = {c1}, c3 = {c3}, delta = {delta})"
            )));
        }
        Ok(Self::unchecked(c1, c2, c3, delta))
    }

    /// No sign checks; used for negative-control runs (`c3 = 0`, flipped `c1`).
    pub fn unchecked(c1: f64, c2: f64, c3: f64, delta: f64) -> Self {
        Self {
            c1,
            c2,
            c3,
            delta,
            perturbation: Perturbation::None,
        }
    }

    pub fn with_perturbation(mut self, perturbation: Perturbation) -> Self {
        self.perturbation = perturbation;
        self
    }

    pub fn growth(&self) -> Growth {
        if self.delta > 0.0 {
            Growth::Superlinear
        } else {
            Growth::Linear
        }
    }

    pub fn z1(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let f = self.c1 * (1.0 + norm(x)).powf(self.delta);
        for i in 0..out.len() {
            out[i] = -f * x[i] + self.c2 * y[i];
        }
    }

    pub fn z2(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        let f = self.c3 * (1.0 + norm(y)).powf(self.delta);
        for i in 0..out.len() {
            let z = match self.perturbation {
                Perturbation::None => 0.0,
                Perturbation::Sine { scale } => scale * x[i].sin(),
            };
            out[i] = z - f * y[i];
        }
    }

    /// Coefficient set in dimension `d` with `sigma = I` and `b = 0`.
    pub fn coefficients(&self, d: usize) -> CoefficientSet {
        let a = *self;
        let b = *self;
        CoefficientSet::new(
            Dims::kinetic(d),
            Arc::new(move |_t: f64, x: &[f64], y: &[f64], out: &mut [f64]| a.z1(x, y, out)),
            Arc::new(move |_t: f64, x: &[f64], y: &[f64], out: &mut [f64]| b.z2(x, y, out)),
            Arc::new(ScaledIdentity::new(1.0, d, d)),
            SigmaBounds::scalar(1.0),
        )
        .with_growth(self.growth())
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let e = DampedKinetic::new(1.0, 0.05, 1.0, 1.0).unwrap();
        let mut out = [0.0; 2];
        e.z1(&[3.0, 4.0], &[1.0, 0.0], &mut out);
        assert_eq!(out, [-18.0 + 0.05, -24.0]);
        e.z2(&[0.0, 0.0], &[0.0, 2.0], &mut out);
        assert_eq!(out, [0.0, -6.0]);
        assert_eq!(e.growth(), Growth::Superlinear);
    }

    #[test]
    fn parameter_checks() {
        assert!(DampedKinetic::new(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(DampedKinetic::new(1.0, 0.0, 0.0, 0.0).is_err());
        assert!(DampedKinetic::new(1.0, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn perturbation_is_bounded() {
        let e = DampedKinetic::new(1.0, 0.0, 1.0, 0.0)
            .unwrap()
            .with_perturbation(Perturbation::Sine { scale: 0.5 });
        let mut out = [0.0];
        e.z2(&[std::f64::consts::FRAC_PI_2], &[0.0], &mut out);
        assert_eq!(out, [0.5]);
    }
}
