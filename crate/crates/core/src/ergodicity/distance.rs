use serde::{Deserialize, Serialize};

use super::{DiagError, HistogramLaw};
use crate::fields::LyapunovV;
use crate::law::EmpiricalLaw;
use crate::model::HistogramSpec;
use crate::rng::{derive_seed, salt, stream_rng};
use crate::stats::percentile;

/// Weight function of a V-distance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum VWeight {
    /// `V = 1`, the `theta -> 0` limit; gives the variation distance.
    Unit,
    Lyapunov(LyapunovV),
}

impl VWeight {
    pub fn eval(&self, point: &[f64]) -> f64 {
        match self {
            VWeight::Unit => 1.0,
            VWeight::Lyapunov(v) => v.value_at(point),
        }
    }
}

fn check(a: &HistogramLaw, b: &HistogramLaw) -> Result<(), DiagError> {
    if a.spec() != b.spec() {
        return Err(DiagError::BinningMismatch);
    }
    Ok(())
}

/// `sum_i |a_i - b_i| + |a_out - b_out|`, in `[0, 2]`.
pub fn empirical_var_distance(a: &HistogramLaw, b: &HistogramLaw) -> Result<f64, DiagError> {
    check(a, b)?;
    let inside: f64 = a.masses().iter().zip(b.masses()).map(|(p, q)| (p - q).abs()).sum();
    Ok(inside + (a.out_of_box() - b.out_of_box()).abs())
}

/// `sum_i V(center_i) |a_i - b_i| + V_corner |a_out - b_out|`, where
/// `V_corner` is the largest value of `V` over the box corners.
pub fn empirical_v_distance(a: &HistogramLaw, b: &HistogramLaw, v: &VWeight) -> Result<f64, DiagError> {
    check(a, b)?;
    let spec = a.spec();
    let mut total = 0.0;
    for (i, (p, q)) in a.masses().iter().zip(b.masses()).enumerate() {
        let diff = (p - q).abs();
        if diff > 0.0 {
            total += v.eval(&spec.center(i)) * diff;
        }
    }
    let corner = spec.corners().iter().map(|c| v.eval(c)).fold(0.0f64, f64::max);
    Ok(total + corner * (a.out_of_box() - b.out_of_box()).abs())
}

/// Variation distance of two particle clouds binned with `spec`.
pub fn law_var_distance(a: &EmpiricalLaw, b: &EmpiricalLaw, spec: &HistogramSpec) -> f64 {
    let (ha, hb) = (HistogramLaw::from_law(a, spec), HistogramLaw::from_law(b, spec));
    empirical_var_distance(&ha, &hb).expect("same binning")
}

/// Bootstrap noise floor: the 95th percentile of the distance between two
/// independent size-`n` resamples of `law`, over `resamples` pairs.
pub fn bootstrap_noise_floor(
    law: &EmpiricalLaw,
    spec: &HistogramSpec,
    n: usize,
    resamples: usize,
    weight: &VWeight,
    seed: u64,
) -> f64 {
    let mut rng = stream_rng(derive_seed(seed, salt::BOOTSTRAP), 1);
    let d: Vec<f64> = (0..resamples.max(1))
        .map(|_| {
            let a = HistogramLaw::from_law(&law.resample(n, &mut rng), spec);
            let b = HistogramLaw::from_law(&law.resample(n, &mut rng), spec);
            empirical_v_distance(&a, &b, weight).expect("same binning")
        })
        .collect();
    percentile(&d, 0.95)
}
