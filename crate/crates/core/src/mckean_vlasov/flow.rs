use serde::{Deserialize, Serialize};

use crate::ergodicity::HistogramLaw;
use crate::law::EmpiricalLaw;
use crate::model::{HistogramSpec, SimConfig};

/// Laws on a time grid. Slices keep their particle clouds; histograms are
/// computed on demand with the flow's binning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasureFlow {
    step: f64,
    steps: Vec<usize>,
    slices: Vec<EmpiricalLaw>,
    histogram: HistogramSpec,
}

impl MeasureFlow {
    /// `steps[i]` is the grid step index of `slices[i]`, strictly increasing.
    pub fn new(step: f64, steps: Vec<usize>, slices: Vec<EmpiricalLaw>, histogram: HistogramSpec) -> Self {
        assert_eq!(steps.len(), slices.len(), "one slice per recorded step");
        assert!(steps.windows(2).all(|w| w[0] < w[1]), "steps must increase");
        Self {
            step,
            steps,
            slices,
            histogram,
        }
    }

    /// The same law at every recorded step of `cfg`.
    pub fn constant(law: &EmpiricalLaw, cfg: &SimConfig) -> Self {
        let steps = cfg.recorded_steps();
        let slices = vec![law.clone(); steps.len()];
        Self::new(cfg.step, steps, slices, cfg.histogram.clone())
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn steps(&self) -> &[usize] {
        &self.steps
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    pub fn times(&self) -> Vec<f64> {
        self.steps.iter().map(|k| *k as f64 * self.step).collect()
    }

    pub fn slice(&self, i: usize) -> &EmpiricalLaw {
        &self.slices[i]
    }

    pub fn slices(&self) -> &[EmpiricalLaw] {
        &self.slices
    }

    pub fn last(&self) -> &EmpiricalLaw {
        self.slices.last().expect("non-empty flow")
    }

    pub fn histogram_spec(&self) -> &HistogramSpec {
        &self.histogram
    }

    pub fn histogram(&self, i: usize) -> HistogramLaw {
        HistogramLaw::from_law(&self.slices[i], &self.histogram)
    }

    /// Index of the recorded slice nearest to grid step `k` (earlier on ties).
    pub fn slice_for_step(&self, k: usize) -> usize {
        match self.steps.binary_search(&k) {
            Ok(i) => i,
            Err(0) => 0,
            Err(i) if i == self.steps.len() => i - 1,
            Err(i) => {
                if k - self.steps[i - 1] <= self.steps[i] - k {
                    i - 1
                } else {
                    i
                }
            }
        }
    }

    /// True when both flows share step size, recorded steps and binning.
    pub fn same_grid(&self, other: &MeasureFlow) -> bool {
        self.step == other.step && self.steps == other.steps && self.histogram == other.histogram
    }
}
