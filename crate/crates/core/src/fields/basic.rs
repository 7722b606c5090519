//! Elementary fields: zero, constant, linear and scaled-identity diffusion.

use std::sync::Arc;

use crate::model::{CoefficientSet, Dims, PhaseField, SigmaBounds, SpaceField};

/// The zero field of any output dimension.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroPhase;

impl PhaseField for ZeroPhase {
    fn eval(&self, _t: f64, _x: &[f64], _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// A constant vector on the noisy component.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantSpace {
    pub value: Vec<f64>,
}

impl ConstantSpace {
    pub fn new(value: Vec<f64>) -> Self {
        Self { value }
    }

    pub fn zeros(d: usize) -> Self {
        Self { value: vec![0.0; d] }
    }
}

impl SpaceField for ConstantSpace {
    fn eval(&self, _t: f64, _y: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }
}

/// `s * I` as a `d2 x m` matrix (ones on the leading diagonal).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledIdentity {
    pub scale: f64,
    pub d2: usize,
    pub m: usize,
}

impl ScaledIdentity {
    pub fn new(scale: f64, d2: usize, m: usize) -> Self {
        Self { scale, d2, m }
    }
}

impl SpaceField for ScaledIdentity {
    fn eval(&self, _t: f64, _y: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..self.d2.min(self.m) {
            out[i * self.m + i] = self.scale;
        }
    }
}

/// `out = A_x x + A_y y` with row-major `k x d1` and `k x d2` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPhase {
    pub ax: Vec<f64>,
    pub ay: Vec<f64>,
}

impl PhaseField for LinearPhase {
    fn eval(&self, _t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        let (d1, d2) = (x.len(), y.len());
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            s += self.ax[i * d1..(i + 1) * d1]
                .iter()
                .zip(x)
                .map(|(a, v)| a * v)
                .sum::<f64>();
            s += self.ay[i * d2..(i + 1) * d2]
                .iter()
                .zip(y)
                .map(|(a, v)| a * v)
                .sum::<f64>();
            *o = s;
        }
    }
}

fn identity(d: usize, s: f64) -> Vec<f64> {
    let mut v = vec![0.0; d * d];
    for i in 0..d {
        v[i * d + i] = s;
    }
    v
}

/// Kinetic Langevin dynamics in dimension `d`: `Z1 = y`,
/// `Z2 = -x - gamma y`, `sigma = sqrt(2 gamma) I`. The stationary law is the
/// standard Gaussian.
pub fn linear_langevin(d: usize, gamma: f64) -> CoefficientSet {
    let s = (2.0 * gamma).sqrt();
    CoefficientSet::new(
        Dims::kinetic(d),
        Arc::new(LinearPhase {
            ax: vec![0.0; d * d],
            ay: identity(d, 1.0),
        }),
        Arc::new(LinearPhase {
            ax: identity(d, -1.0),
            ay: identity(d, -gamma),
        }),
        Arc::new(ScaledIdentity::new(s, d, d)),
        SigmaBounds::scalar(s),
    )
}
