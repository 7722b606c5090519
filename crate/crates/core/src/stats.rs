//! Small statistical helpers: compensated sums, moments, percentiles, least squares.

use serde::{Deserialize, Serialize};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, v: f64) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum in slice order.
pub fn sum(values: &[f64]) -> f64 {
    let mut s = NeumaierSum::default();
    values.iter().for_each(|v| s.add(*v));
    s.sum()
}

pub fn mean(values: &[f64]) -> f64 {
    sum(values) / values.len() as f64
}

/// Unbiased sample variance.
pub fn variance(values: &[f64]) -> f64 {
    let m = mean(values);
    let mut s = NeumaierSum::default();
    values.iter().for_each(|v| s.add((v - m) * (v - m)));
    s.sum() / (values.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn standard_error(values: &[f64]) -> f64 {
    (variance(values) / values.len() as f64).sqrt()
}

/// Linear-interpolated percentile, `q` in `[0, 1]`. Sorts a copy.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

/// Ordinary least squares fit of `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    /// Coefficient of determination; 0 when `y` has no variance.
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let mx = mean(x);
    let my = mean(y);
    let mut sxx = NeumaierSum::default();
    let mut sxy = NeumaierSum::default();
    let mut syy = NeumaierSum::default();
    for (a, b) in x.iter().zip(y) {
        sxx.add((a - mx) * (a - mx));
        sxy.add((a - mx) * (b - my));
        syy.add((b - my) * (b - my));
    }
    let slope = if sxx.sum() > 0.0 { sxy.sum() / sxx.sum() } else { 0.0 };
    let intercept = my - slope * mx;
    let mut ssr = NeumaierSum::default();
    for (a, b) in x.iter().zip(y) {
        let r = b - intercept - slope * a;
        ssr.add(r * r);
    }
    let sst = syy.sum();
    let r_squared = if sst > 0.0 {
        (1.0 - ssr.sum() / sst).max(0.0)
    } else {
        0.0
    };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}
