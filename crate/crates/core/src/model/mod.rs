//! Phase-space types, simulation configuration, coefficient sets and the
//! localized `L^p_q` norm.

mod coeffs;
mod config;
mod norm;

pub use coeffs::*;
pub use config::*;
pub use norm::*;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("non-finite coordinate {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("(p, q) = ({p}, {q}) is not admissible for d2 = {d2}: need p, q > 2 and d2/p + 2/q < 1")]
    NotAdmissible { p: f64, q: f64, d2: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("norm diverged at center {center:?}")]
    NormDiverged { center: Vec<f64> },
    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Dimensions of the phase space `R^{d1} x R^{d2}` and of the driving noise `R^m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub d1: usize,
    pub d2: usize,
    pub m: usize,
}

impl Dims {
    pub const fn new(d1: usize, d2: usize, m: usize) -> Self {
        Self { d1, d2, m }
    }

    /// `d1 = d2 = m = d`, the kinetic case used by most shipped examples.
    pub const fn kinetic(d: usize) -> Self {
        Self { d1: d, d2: d, m: d }
    }

    pub const fn phase(&self) -> usize {
        self.d1 + self.d2
    }
}

/// A point `(x, y)` of phase space. All coordinates are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseState {
    x: Vec<f64>,
    y: Vec<f64>,
}

impl PhaseState {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self, ModelError> {
        for (index, &value) in x.iter().chain(y.iter()).enumerate() {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { index, value });
            }
        }
        Ok(Self { x, y })
    }

    pub fn origin(d1: usize, d2: usize) -> Self {
        Self {
            x: vec![0.0; d1],
            y: vec![0.0; d2],
        }
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn d1(&self) -> usize {
        self.x.len()
    }

    pub fn d2(&self) -> usize {
        self.y.len()
    }

    /// Euclidean norm of the concatenated vector `(x, y)`.
    pub fn norm(&self) -> f64 {
        self.x.iter().chain(self.y.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Concatenated coordinates `[x, y]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = self.x.clone();
        v.extend_from_slice(&self.y);
        v
    }
}

/// Integrability exponents `(p, q)` with `p, q > 2` and `d2/p + 2/q < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissiblePair {
    p: f64,
    q: f64,
}

impl AdmissiblePair {
    pub fn new(p: f64, q: f64, d2: usize) -> Result<Self, ModelError> {
        if is_admissible(p, q, d2) {
            Ok(Self { p, q })
        } else {
            Err(ModelError::NotAdmissible { p, q, d2 })
        }
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }
}

pub fn is_admissible(p: f64, q: f64, d2: usize) -> bool {
    p.is_finite() && q.is_finite() && p > 2.0 && q > 2.0 && (d2 as f64) / p + 2.0 / q < 1.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_state_rejects_non_finite() {
        assert!(PhaseState::new(vec![0.0], vec![f64::NAN]).is_err());
        assert!(PhaseState::new(vec![f64::INFINITY], vec![0.0]).is_err());
        let s = PhaseState::new(vec![3.0], vec![4.0]).unwrap();
        assert_eq!(s.norm(), 5.0);
        assert_eq!(s.to_vec(), vec![3.0, 4.0]);
    }

    #[test]
    fn admissibility_examples() {
        assert!(AdmissiblePair::new(4.0, 4.0, 1).is_ok());
        assert!(AdmissiblePair::new(3.0, 3.0, 3).is_err());
        assert!(AdmissiblePair::new(2.0, 100.0, 1).is_err());
        // boundary: 1/2 + 2/4 = 1 is excluded
        assert!(AdmissiblePair::new(2.5, 4.0, 1).is_ok());
        assert!(AdmissiblePair::new(4.0, 4.0, 2).is_err());
    }
}
