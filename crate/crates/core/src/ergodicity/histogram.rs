use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::DiagError;
use crate::law::EmpiricalLaw;
use crate::model::HistogramSpec;

/// Particles per worker chunk when binning; fixed so merges are deterministic.
const CHUNK: usize = 4096;

/// Bin masses of a law on a product grid, plus the mass outside the box
/// (including mass lost to blown-up particles).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramLaw {
    spec: HistogramSpec,
    masses: Vec<f64>,
    out_of_box: f64,
}

impl HistogramLaw {
    pub fn from_law(law: &EmpiricalLaw, spec: &HistogramSpec) -> Self {
        let d = law.dim();
        let n = law.len();
        let total_bins = spec.total_bins();
        let weighted = law.weights().is_some();
        let partials: Vec<(Vec<f64>, f64)> = law
            .points()
            .par_chunks(CHUNK * d)
            .enumerate()
            .map(|(c, chunk)| {
                let mut local = vec![0.0; total_bins];
                let mut out = 0.0;
                for (j, p) in chunk.chunks(d).enumerate() {
                    let w = if weighted { law.raw_weight(c * CHUNK + j) } else { 1.0 };
                    match spec.cell_index(p) {
                        Some(k) => local[k] += w,
                        None => out += w,
                    }
                }
                (local, out)
            })
            .collect();
        let mut weights = vec![0.0; total_bins];
        let mut out_w = 0.0;
        for (local, out) in partials {
            for (a, b) in weights.iter_mut().zip(local) {
                *a += b;
            }
            out_w += out;
        }
        let total: f64 = if weighted {
            weights.iter().sum::<f64>() + out_w
        } else {
            n as f64
        };
        let alive = 1.0 - law.lost_mass();
        let scale = if total > 0.0 { alive / total } else { 0.0 };
        let masses: Vec<f64> = weights.iter().map(|w| w * scale).collect();
        let out_of_box = if total > 0.0 {
            out_w * scale + law.lost_mass()
        } else {
            1.0
        };
        Self {
            spec: spec.clone(),
            masses,
            out_of_box,
        }
    }

    /// Builds a histogram from explicit masses; the total must be 1 within 1e-12.
    pub fn from_masses(spec: HistogramSpec, masses: Vec<f64>, out_of_box: f64) -> Result<Self, DiagError> {
        if masses.len() != spec.total_bins() {
            return Err(DiagError::BinningMismatch);
        }
        if masses.iter().any(|m| *m < 0.0) || out_of_box < 0.0 {
            return Err(DiagError::Invalid("negative mass".into()));
        }
        let total = masses.iter().sum::<f64>() + out_of_box;
        if (total - 1.0).abs() > 1e-12 {
            return Err(DiagError::Invalid(format!("total mass {total} differs from 1")));
        }
        Ok(Self {
            spec,
            masses,
            out_of_box,
        })
    }

    pub fn spec(&self) -> &HistogramSpec {
        &self.spec
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn out_of_box(&self) -> f64 {
        self.out_of_box
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum::<f64>() + self.out_of_box
    }
}
