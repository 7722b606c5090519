use serde::{Deserialize, Serialize};

use super::{McKeanError, MeasureFlow};
use crate::ergodicity::{bootstrap_noise_floor, law_var_distance, VWeight};
use crate::integrators::{
    diffusion_solve, girsanov_traces, simulate_ensemble, weight_stats, InitialLaw, ShiftField, SimOptions,
};
use crate::model::{CoefficientSet, Interaction, MeasureArg, SimConfig};

/// Per recorded time: the variation distance between the laws driven by the
/// two frozen flows and its Pinsker bound `sqrt(2 KL)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowBoundReport {
    pub times: Vec<f64>,
    pub empirical_tv: Vec<f64>,
    pub bound: Vec<f64>,
    pub noise_floor: Vec<f64>,
    /// `empirical <= bound + floor` at every time.
    pub respected: bool,
}

/// `xi = sigma^{-1} kappa (int W dmu_t - int W dnu_t)` along a reference path.
struct FlowShift<'a> {
    coeffs: &'a CoefficientSet,
    interaction: &'a Interaction,
    target: Vec<MeasureArg<'a>>,
    reference: Vec<MeasureArg<'a>>,
    target_flow: &'a MeasureFlow,
}

impl ShiftField for FlowShift<'_> {
    fn eval(&self, step: usize, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        let dims = self.coeffs.dims();
        let j = self.target_flow.slice_for_step(step);
        let mut a = vec![0.0; dims.d2];
        let mut b = vec![0.0; dims.d2];
        self.interaction.average(x, y, Some(&self.target[j]), &mut a);
        self.interaction.average(x, y, Some(&self.reference[j]), &mut b);
        let kappa = self.interaction.kappa();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(p, q)| kappa * (p - q)).collect();
        let mut s = vec![0.0; dims.d2 * dims.m];
        self.coeffs.eval_sigma(t, y, &mut s);
        diffusion_solve(&s, dims.d2, dims.m, &diff, out);
    }
}

/// Compares the SDE with frozen flow `target` against the one with frozen
/// flow `reference` (common random numbers). The bound comes from Girsanov
/// weights accumulated along the reference paths.
pub fn girsanov_flow_bound(
    cfg: &SimConfig,
    coeffs: &CoefficientSet,
    init: &InitialLaw,
    target: &MeasureFlow,
    reference: &MeasureFlow,
    resamples: usize,
) -> Result<FlowBoundReport, McKeanError> {
    if !target.same_grid(reference) {
        return Err(McKeanError::GridMismatch);
    }
    let interaction = coeffs
        .interaction()
        .ok_or_else(|| McKeanError::Invalid("coefficients carry no interaction".into()))?;
    let opts = SimOptions {
        store_paths: true,
        store_increments: true,
        record_flow: true,
    };
    let ref_run = simulate_ensemble(cfg, coeffs, init, Some(reference), opts)?;
    let tgt_run = simulate_ensemble(cfg, coeffs, init, Some(target), SimOptions::flow())?;
    let ref_flow = ref_run.flow.as_ref().expect("flow recorded");
    let tgt_flow = tgt_run.flow.as_ref().expect("flow recorded");
    if !ref_flow.same_grid(target) {
        return Err(McKeanError::GridMismatch);
    }
    let shift = FlowShift {
        coeffs,
        interaction,
        target: target.slices().iter().map(|l| interaction.prepare(l)).collect(),
        reference: reference.slices().iter().map(|l| interaction.prepare(l)).collect(),
        target_flow: target,
    };
    let traces = girsanov_traces(&ref_run, &shift)?;
    let mut report = FlowBoundReport {
        times: ref_flow.times(),
        empirical_tv: Vec::new(),
        bound: Vec::new(),
        noise_floor: Vec::new(),
        respected: true,
    };
    for (i, &k) in ref_flow.steps().iter().enumerate() {
        let lw: Vec<f64> = traces.iter().map(|t| t.log_weight[k]).collect();
        let en: Vec<f64> = traces.iter().map(|t| t.energy[k]).collect();
        let stats = weight_stats(&lw, &en);
        let n = ref_run.len();
        if !(stats.ess >= 0.01 * n as f64) {
            return Err(crate::integrators::IntegratorError::DegenerateReweighting { ess: stats.ess, n }.into());
        }
        let tv = law_var_distance(tgt_flow.slice(i), ref_flow.slice(i), &cfg.histogram);
        let floor = bootstrap_noise_floor(
            ref_flow.slice(i),
            &cfg.histogram,
            n,
            resamples,
            &VWeight::Unit,
            cfg.seed,
        );
        report.respected &= tv <= stats.pinsker_bound + floor;
        report.empirical_tv.push(tv);
        report.bound.push(stats.pinsker_bound);
        report.noise_floor.push(floor);
    }
    Ok(report)
}
