//! Weighted particle clouds representing the law of `(X_t, Y_t)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::model::PhaseState;
use crate::stats::NeumaierSum;

/// A weighted cloud of alive particles. Mass lost to blown-up particles is
/// tracked separately; particle `i` carries mass
/// `(1 - lost_mass) * w_i / sum(w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalLaw {
    d1: usize,
    d2: usize,
    points: Vec<f64>,
    weights: Option<Vec<f64>>,
    total_weight: f64,
    lost_mass: f64,
}

impl EmpiricalLaw {
    /// Equally weighted cloud from concatenated `[x, y]` rows.
    pub fn new(d1: usize, d2: usize, points: Vec<f64>) -> Self {
        let n = points.len() / (d1 + d2);
        Self {
            d1,
            d2,
            points,
            weights: None,
            total_weight: n as f64,
            lost_mass: 0.0,
        }
    }

    pub fn dirac(state: &PhaseState) -> Self {
        Self::new(state.d1(), state.d2(), state.to_vec())
    }

    /// Packs the alive particles of split `x` (n x d1) and `y` (n x d2)
    /// blocks. Dead particles contribute their weight to the lost mass.
    pub fn from_states(d1: usize, d2: usize, x: &[f64], y: &[f64], alive: &[bool], weights: Option<&[f64]>) -> Self {
        let n = alive.len();
        let mut points = Vec::with_capacity(n * (d1 + d2));
        let mut kept = weights.map(|_| Vec::with_capacity(n));
        let mut alive_w = NeumaierSum::default();
        let mut dead_w = NeumaierSum::default();
        for i in 0..n {
            let w = weights.map_or(1.0, |w| w[i]);
            if alive[i] {
                points.extend_from_slice(&x[i * d1..(i + 1) * d1]);
                points.extend_from_slice(&y[i * d2..(i + 1) * d2]);
                if let Some(k) = kept.as_mut() {
                    k.push(w);
                }
                alive_w.add(w);
            } else {
                dead_w.add(w);
            }
        }
        let alive_total = alive_w.sum();
        let total = alive_total + dead_w.sum();
        let lost_mass = if total > 0.0 { dead_w.sum() / total } else { 1.0 };
        Self {
            d1,
            d2,
            points,
            weights: kept,
            total_weight: alive_total,
            lost_mass,
        }
    }

    /// Replaces the weights (one per alive particle).
    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        assert_eq!(weights.len(), self.len(), "one weight per particle");
        let mut s = NeumaierSum::default();
        weights.iter().for_each(|w| s.add(*w));
        self.total_weight = s.sum();
        self.weights = Some(weights);
        self
    }

    pub fn d1(&self) -> usize {
        self.d1
    }

    pub fn d2(&self) -> usize {
        self.d2
    }

    pub fn dim(&self) -> usize {
        self.d1 + self.d2
    }

    pub fn len(&self) -> usize {
        self.points.len() / self.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..(i + 1) * d]
    }

    pub fn x(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d..i * d + self.d1]
    }

    pub fn y(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.points[i * d + self.d1..(i + 1) * d]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn raw_weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    /// Probability mass of particle `i`.
    pub fn mass(&self, i: usize) -> f64 {
        if self.total_weight <= 0.0 {
            return 0.0;
        }
        (1.0 - self.lost_mass) * self.raw_weight(i) / self.total_weight
    }

    /// Fraction of mass carried by particles that blew up.
    pub fn lost_mass(&self) -> f64 {
        self.lost_mass
    }

    /// Mass-weighted mean over the alive particles, renormalized.
    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut sums = vec![NeumaierSum::default(); d];
        for i in 0..self.len() {
            let w = self.raw_weight(i) / self.total_weight;
            for (s, v) in sums.iter_mut().zip(self.point(i)) {
                s.add(w * v);
            }
        }
        sums.iter().map(|s| s.sum()).collect()
    }

    /// Mass-weighted covariance matrix (row-major `dim x dim`), renormalized.
    pub fn covariance(&self) -> Vec<f64> {
        let d = self.dim();
        let mean = self.mean();
        let mut sums = vec![NeumaierSum::default(); d * d];
        for i in 0..self.len() {
            let w = self.raw_weight(i) / self.total_weight;
            let p = self.point(i);
            for a in 0..d {
                for b in 0..d {
                    sums[a * d + b].add(w * (p[a] - mean[a]) * (p[b] - mean[b]));
                }
            }
        }
        sums.iter().map(|s| s.sum()).collect()
    }

    /// Draws `n` particles with replacement, proportional to weight. The
    /// resample is equally weighted and keeps the lost mass.
    pub fn resample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Self {
        let d = self.dim();
        let len = self.len();
        let mut points = Vec::with_capacity(n * d);
        match &self.weights {
            None => {
                for _ in 0..n {
                    let i = rng.random_range(0..len);
                    points.extend_from_slice(self.point(i));
                }
            }
            Some(w) => {
                let mut cdf = Vec::with_capacity(len);
                let mut acc = 0.0;
                for v in w {
                    acc += v;
                    cdf.push(acc);
                }
                for _ in 0..n {
                    let u = rng.random::<f64>() * acc;
                    let i = cdf.partition_point(|c| *c <= u).min(len - 1);
                    points.extend_from_slice(self.point(i));
                }
            }
        }
        let mut out = Self::new(self.d1, self.d2, points);
        out.lost_mass = self.lost_mass;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dead_particles_become_lost_mass() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [0.0, 0.0, 0.0, 0.0];
        let law = EmpiricalLaw::from_states(1, 1, &x, &y, &[true, false, true, true], None);
        assert_eq!(law.len(), 3);
        assert_eq!(law.lost_mass(), 0.25);
        let total: f64 = (0..3).map(|i| law.mass(i)).sum();
        assert!((total - 0.75).abs() < 1e-15);
        assert_eq!(law.x(1), &[3.0]);
        assert!((law.mean()[0] - 8.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn weighted_mean_and_covariance() {
        let law = EmpiricalLaw::new(1, 1, vec![0.0, 0.0, 2.0, 2.0]).with_weights(vec![1.0, 3.0]);
        assert_eq!(law.mean(), vec![1.5, 1.5]);
        let c = law.covariance();
        assert!((c[0] - 0.75).abs() < 1e-15);
        assert!((c[1] - 0.75).abs() < 1e-15);
    }
}
