use serde::{Deserialize, Serialize};

use super::{particle_system_run, McKeanError, MeasureFlow};
use crate::ergodicity::{bootstrap_noise_floor, empirical_v_distance, law_var_distance, VWeight};
use crate::integrators::{simulate_ensemble, InitialLaw, SimOptions};
use crate::model::{CoefficientSet, SimConfig};
use crate::rng::derive_seed;

/// `rho_lambda(a, b) = max_k e^{-lambda t_k} |a_k - b_k|_var` over the shared grid.
pub fn rho_lambda(a: &MeasureFlow, b: &MeasureFlow, lambda: f64) -> Result<f64, McKeanError> {
    rho_lambda_with(a, b, lambda, &VWeight::Unit)
}

/// [`rho_lambda`] with a weighted slice distance.
pub fn rho_lambda_with(a: &MeasureFlow, b: &MeasureFlow, lambda: f64, weight: &VWeight) -> Result<f64, McKeanError> {
    if !a.same_grid(b) {
        return Err(McKeanError::GridMismatch);
    }
    if !(lambda >= 0.0) {
        return Err(McKeanError::Invalid(format!(
            "lambda must be nonnegative, got {lambda}"
        )));
    }
    let mut rho = 0.0f64;
    for (i, t) in a.times().into_iter().enumerate() {
        let d = empirical_v_distance(&a.histogram(i), &b.histogram(i), weight)?;
        rho = rho.max((-lambda * t).exp() * d);
    }
    Ok(rho)
}

/// Default metric weight `lambda = 4 kappa T`.
pub fn default_picard_lambda(kappa: f64, horizon: f64) -> f64 {
    4.0 * kappa * horizon
}

/// Iteration state of `mu^{n+1} = Psi(mu^n)`, the law flow of the SDE with
/// `mu^n` frozen into its coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardState {
    pub iteration: usize,
    pub flow: MeasureFlow,
    /// `rho_lambda(mu^{n}, mu^{n-1})` for every completed iteration.
    pub rho_history: Vec<f64>,
    pub lambda: f64,
    /// Reuse the base seed in every iteration.
    pub common_random_numbers: bool,
}

impl PicardState {
    /// Starts from the initial law held constant in time.
    pub fn start(cfg: &SimConfig, init: &InitialLaw, lambda: f64, common_random_numbers: bool) -> Self {
        let law = init.empirical(cfg.seed, cfg.particles);
        Self {
            iteration: 0,
            flow: MeasureFlow::constant(&law, cfg),
            rho_history: Vec::new(),
            lambda,
            common_random_numbers,
        }
    }
}

/// One application of the flow map.
pub fn picard_iterate(
    state: PicardState,
    cfg: &SimConfig,
    coeffs: &CoefficientSet,
    init: &InitialLaw,
) -> Result<PicardState, McKeanError> {
    let seed = if state.common_random_numbers {
        cfg.seed
    } else {
        derive_seed(cfg.seed, state.iteration as u64 + 1)
    };
    let run_cfg = cfg.clone().with_seed(seed);
    let ens = simulate_ensemble(&run_cfg, coeffs, init, Some(&state.flow), SimOptions::flow())?;
    let next = ens.flow.expect("flow recorded");
    if !next.same_grid(&state.flow) {
        return Err(McKeanError::GridMismatch);
    }
    let rho = rho_lambda(&next, &state.flow, state.lambda)?;
    let mut rho_history = state.rho_history;
    rho_history.push(rho);
    Ok(PicardState {
        iteration: state.iteration + 1,
        flow: next,
        rho_history,
        ..state
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PicardOptions {
    pub lambda: f64,
    pub common_random_numbers: bool,
    pub max_iterations: usize,
    pub resamples: usize,
}

impl PicardOptions {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            common_random_numbers: true,
            max_iterations: 20,
            resamples: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PicardRun {
    pub state: PicardState,
    /// `max_k e^{-lambda t_k}` times the bootstrap floor of slice `k` of `mu^1`.
    pub noise_floor: f64,
    pub converged: bool,
    /// `rho(n+1) / rho(n)` for successive iterations with `rho(n)` above the floor.
    pub ratios: Vec<f64>,
    /// Terminal variation distance to the interacting particle system.
    pub particle_tv: f64,
    /// Bootstrap floor of the particle system's terminal law.
    pub particle_floor: f64,
    pub matches_particles: bool,
}

/// Iterates until `rho < 2 x floor` or the iteration cap, then compares the
/// fixed point with the interacting particle system (same seed).
pub fn run_picard(
    cfg: &SimConfig,
    coeffs: &CoefficientSet,
    init: &InitialLaw,
    opts: &PicardOptions,
) -> Result<PicardRun, McKeanError> {
    let spec = &cfg.histogram;
    let mut state = PicardState::start(cfg, init, opts.lambda, opts.common_random_numbers);
    let mut noise_floor = f64::NAN;
    let mut converged = false;
    while state.iteration < opts.max_iterations {
        state = picard_iterate(state, cfg, coeffs, init)?;
        if state.iteration == 1 {
            noise_floor = state
                .flow
                .slices()
                .iter()
                .zip(state.flow.times())
                .map(|(law, t)| {
                    (-opts.lambda * t).exp()
                        * bootstrap_noise_floor(law, spec, cfg.particles, opts.resamples, &VWeight::Unit, cfg.seed)
                })
                .fold(0.0, f64::max);
        }
        if *state.rho_history.last().unwrap() < 2.0 * noise_floor {
            converged = true;
            break;
        }
    }
    let ratios = state
        .rho_history
        .windows(2)
        .filter(|w| w[0] > noise_floor)
        .map(|w| w[1] / w[0])
        .collect();
    let (pflow, _) = particle_system_run(cfg, coeffs, init)?;
    let particle_tv = law_var_distance(state.flow.last(), pflow.last(), spec);
    let particle_floor = bootstrap_noise_floor(
        pflow.last(),
        spec,
        cfg.particles,
        opts.resamples,
        &VWeight::Unit,
        cfg.seed,
    );
    Ok(PicardRun {
        state,
        noise_floor,
        converged,
        ratios,
        particle_tv,
        particle_floor,
        matches_particles: particle_tv < 3.0 * particle_floor,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fields::{interaction_z2, DampedKinetic, TanhKernel};
    use crate::law::EmpiricalLaw;
    use crate::model::{Dims, HistogramSpec, PhaseState};

    fn flows(at: usize) -> (MeasureFlow, MeasureFlow) {
        let spec = HistogramSpec::uniform(2, 0.0, 2.0, 2);
        let a = EmpiricalLaw::new(1, 1, vec![0.5, 0.5]);
        let b = EmpiricalLaw::new(1, 1, vec![1.5, 1.5]);
        let mut other = vec![a.clone(); 3];
        other[at] = b;
        (
            MeasureFlow::new(0.5, vec![0, 1, 2], vec![a; 3], spec.clone()),
            MeasureFlow::new(0.5, vec![0, 1, 2], other, spec),
        )
    }

    #[test]
    fn rho_single_slice_arithmetic() {
        let (a, b) = flows(0);
        assert_eq!(rho_lambda(&a, &a, 1.0).unwrap(), 0.0);
        assert_eq!(rho_lambda(&a, &b, 1.0).unwrap(), 2.0);
        let (a, b) = flows(2);
        assert!((rho_lambda(&a, &b, 1.0).unwrap() - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(rho_lambda(&a, &b, 0.0).unwrap(), 2.0);
    }

    #[test]
    fn zero_coupling_is_stationary_after_one_iteration() {
        let cfg = SimConfig::new(0.5, 0.01, 100, 5, Dims::kinetic(1)).with_record_every(0.25);
        let base = DampedKinetic::new(1.0, 0.05, 1.0, 0.0).unwrap().coefficients(1);
        let c = interaction_z2(base, Arc::new(TanhKernel { coordinate: 1, dim: 1 }), 0.0, 0).unwrap();
        let init = InitialLaw::Dirac(PhaseState::new(vec![1.0], vec![1.0]).unwrap());
        let mut s = PicardState::start(&cfg, &init, 1.0, true);
        s = picard_iterate(s, &cfg, &c, &init).unwrap();
        s = picard_iterate(s, &cfg, &c, &init).unwrap();
        assert_eq!(s.rho_history[1], 0.0);
    }
}
