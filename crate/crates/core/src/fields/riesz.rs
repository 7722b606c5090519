use serde::{Deserialize, Serialize};

use super::FieldError;
use crate::model::SpaceField;

/// Default singularity floor.
pub const DEFAULT_FLOOR: f64 = 1e-6;

/// Riesz-type singular drift `b(x) = sum_j w_j (x - y_j) / |x - y_j|^{alpha + 1}`
/// with the distance floored at `floor` so evaluation is total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RieszDrift {
    atoms: Vec<(Vec<f64>, f64)>,
    alpha: f64,
    floor: f64,
    total_weight: f64,
}

impl RieszDrift {
    pub fn new(atoms: Vec<(Vec<f64>, f64)>, alpha: f64, floor: f64) -> Result<Self, FieldError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(FieldError::InvalidParameter(format!(
                "alpha must lie in (0, 1), got {alpha}"
            )));
        }
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(FieldError::InvalidParameter(format!(
                "floor must be positive, got {floor}"
            )));
        }
        if atoms.is_empty() {
            return Err(FieldError::InvalidParameter("at least one atom required".into()));
        }
        let dim = atoms[0].0.len();
        for (loc, w) in &atoms {
            if loc.len() != dim || loc.iter().any(|v| !v.is_finite()) {
                return Err(FieldError::InvalidParameter(
                    "atom locations must be finite and of equal dimension".into(),
                ));
            }
            if !(*w > 0.0 && w.is_finite()) {
                return Err(FieldError::InvalidParameter(format!(
                    "atom weight must be positive, got {w}"
                )));
            }
        }
        let total_weight = atoms.iter().map(|a| a.1).sum();
        Ok(Self {
            atoms,
            alpha,
            floor,
            total_weight,
        })
    }

    /// Single atom of weight `w` at the origin of `R^d`.
    pub fn single(d: usize, w: f64, alpha: f64, floor: f64) -> Result<Self, FieldError> {
        Self::new(vec![(vec![0.0; d], w)], alpha, floor)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn dim(&self) -> usize {
        self.atoms[0].0.len()
    }

    pub fn atoms(&self) -> &[(Vec<f64>, f64)] {
        &self.atoms
    }

    pub fn with_floor(&self, floor: f64) -> Result<Self, FieldError> {
        Self::new(self.atoms.clone(), self.alpha, floor)
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (loc, w) in &self.atoms {
            let mut r2 = 0.0;
            for (a, b) in x.iter().zip(loc) {
                r2 += (a - b) * (a - b);
            }
            let r = r2.sqrt().max(self.floor);
            let scale = w / r.powf(self.alpha + 1.0);
            for ((o, a), b) in out.iter_mut().zip(x).zip(loc) {
                *o += scale * (a - b);
            }
        }
    }

    /// `|b(x)|`.
    pub fn magnitude(&self, x: &[f64]) -> f64 {
        let mut out = vec![0.0; x.len()];
        self.eval_into(x, &mut out);
        out.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

impl SpaceField for RieszDrift {
    fn eval(&self, _t: f64, y: &[f64], out: &mut [f64]) {
        self.eval_into(y, out);
    }
}

/// Evaluates the floored Riesz drift at `x`.
pub fn riesz_eval(drift: &RieszDrift, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    drift.eval_into(x, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_distance() {
        let b = RieszDrift::single(1, 1.0, 0.5, DEFAULT_FLOOR).unwrap();
        assert_eq!(riesz_eval(&b, &[1.0]), vec![1.0]);
    }

    #[test]
    fn symmetric_atoms_cancel() {
        let b = RieszDrift::new(vec![(vec![1.0], 1.0), (vec![-1.0], 1.0)], 0.3, DEFAULT_FLOOR).unwrap();
        assert_eq!(riesz_eval(&b, &[0.0]), vec![0.0]);
    }

    #[test]
    fn distance_two() {
        let b = RieszDrift::single(1, 1.0, 0.5, DEFAULT_FLOOR).unwrap();
        let v = riesz_eval(&b, &[2.0])[0];
        assert!((v - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn smoothed_measure_quadrature_agrees() {
        // nu spread uniformly over [-s, s] with total mass 1; as s shrinks the
        // quadrature value at x = 2 tends to the single-atom value 2^{-1/2}
        let s = 1e-3;
        let n = 2000;
        let atoms: Vec<(Vec<f64>, f64)> = (0..n)
            .map(|k| (vec![-s + (k as f64 + 0.5) * 2.0 * s / n as f64], 1.0 / n as f64))
            .collect();
        let smooth = RieszDrift::new(atoms, 0.5, DEFAULT_FLOOR).unwrap();
        let v = riesz_eval(&smooth, &[2.0])[0];
        assert!((v - 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn floor_caps_the_singularity() {
        let b = RieszDrift::single(1, 1.0, 0.5, 1e-2).unwrap();
        let v = riesz_eval(&b, &[1e-4])[0];
        assert!((v - 1e-4 / 1e-3).abs() < 1e-12);
        assert_eq!(riesz_eval(&b, &[0.0]), vec![0.0]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(RieszDrift::single(1, 1.0, 1.0, 1e-6).is_err());
        assert!(RieszDrift::single(1, -1.0, 0.5, 1e-6).is_err());
        assert!(RieszDrift::single(1, 1.0, 0.5, 0.0).is_err());
    }
}
