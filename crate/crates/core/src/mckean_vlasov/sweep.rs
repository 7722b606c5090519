use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{particle_system_run, McKeanError, MeasureFlow};
use crate::ergodicity::{
    bootstrap_noise_floor, empirical_var_distance, fit_exponential_decay_with, DecayFit, DecayVerdict, VWeight,
};
use crate::fields::interaction_z2;
use crate::integrators::InitialLaw;
use crate::model::{CoefficientSet, InteractionKernel, SimConfig};
use crate::rng::derive_seed;

/// Variation distance of two flows at every recorded time.
pub fn flow_distance_series(a: &MeasureFlow, b: &MeasureFlow) -> Result<Vec<f64>, McKeanError> {
    if !a.same_grid(b) {
        return Err(McKeanError::GridMismatch);
    }
    (0..a.len())
        .map(|i| Ok(empirical_var_distance(&a.histogram(i), &b.histogram(i))?))
        .collect()
}

/// Per-time bootstrap floor of a flow: distance between two independent
/// resamples of each slice at the flow's particle count.
pub fn flow_noise_floor(flow: &MeasureFlow, particles: usize, resamples: usize, seed: u64) -> Vec<f64> {
    flow.slices()
        .iter()
        .map(|law| bootstrap_noise_floor(law, flow.histogram_spec(), particles, resamples, &VWeight::Unit, seed))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    /// Fit window `[start, end]` in time.
    pub fit_window: (f64, f64),
    pub resamples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub kappa: f64,
    pub times: Vec<f64>,
    pub distance: Vec<f64>,
    pub noise_floor: Vec<f64>,
    /// `None` when too few points rise above the floor.
    pub fit: Option<DecayFit>,
    pub verdict: DecayVerdict,
}

impl SweepEntry {
    pub fn rate(&self) -> Option<f64> {
        self.fit.as_ref().map(|f| f.rate)
    }

    /// `t,distance,noise_floor` rows.
    pub fn csv(&self) -> String {
        let mut s = String::from("t,distance,noise_floor\n");
        for i in 0..self.times.len() {
            let _ = writeln!(
                s,
                "{:?},{:?},{:?}",
                self.times[i], self.distance[i], self.noise_floor[i]
            );
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Largest coupling in the list with confirmed decay.
    pub kappa_star: Option<f64>,
}

/// Runs the particle system from two initial laws (independent seeds) for
/// each coupling strength and fits the decay of their distance.
pub fn uniform_ergodicity_sweep(
    base: &CoefficientSet,
    kernel: Arc<dyn InteractionKernel>,
    kappas: &[f64],
    laws: (&InitialLaw, &InitialLaw),
    cfg: &SimConfig,
    opts: &SweepOptions,
) -> Result<SweepReport, McKeanError> {
    let mut entries = Vec::with_capacity(kappas.len());
    for (j, &kappa) in kappas.iter().enumerate() {
        let coeffs = interaction_z2(base.clone(), kernel.clone(), kappa, cfg.seed)?;
        let cfg_a = cfg.clone().with_seed(derive_seed(cfg.seed, 2 * j as u64));
        let cfg_b = cfg.clone().with_seed(derive_seed(cfg.seed, 2 * j as u64 + 1));
        let (flow_a, _) = particle_system_run(&cfg_a, &coeffs, laws.0)?;
        let (flow_b, _) = particle_system_run(&cfg_b, &coeffs, laws.1)?;
        let distance = flow_distance_series(&flow_a, &flow_b)?;
        let noise_floor = flow_noise_floor(&flow_a, cfg.particles, opts.resamples, cfg_a.seed);
        let times = flow_a.times();
        entries.push(sweep_entry(kappa, times, distance, noise_floor, opts.fit_window));
    }
    let kappa_star = entries
        .iter()
        .filter(|e| e.verdict == DecayVerdict::DecayConfirmed)
        .map(|e| e.kappa)
        .fold(None, |m: Option<f64>, k| Some(m.map_or(k, |m| m.max(k))));
    Ok(SweepReport { entries, kappa_star })
}

/// Fits the decay inside `window`, excluding points at the floor or at the
/// saturation plateau `2 - floor`.
pub fn sweep_entry(
    kappa: f64,
    times: Vec<f64>,
    distance: Vec<f64>,
    noise_floor: Vec<f64>,
    window: (f64, f64),
) -> SweepEntry {
    let idx: Vec<usize> = (0..times.len())
        .filter(|&i| times[i] >= window.0 && times[i] <= window.1)
        .collect();
    let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
    let (t, d, f) = (pick(&times), pick(&distance), pick(&noise_floor));
    let ceiling: Vec<f64> = f.iter().map(|x| 2.0 - x).collect();
    let fit = fit_exponential_decay_with(&t, &d, &f, Some(&ceiling)).ok();
    let verdict = fit.as_ref().map_or(DecayVerdict::NoDecay, |f| f.verdict);
    SweepEntry {
        kappa,
        times,
        distance,
        noise_floor,
        fit,
        verdict,
    }
}
