use rayon::prelude::*;

use super::{McKeanError, MeasureFlow};
use crate::integrators::{step_in_place, Ensemble, InitialLaw, IntegratorError, StepWorkspace};
use crate::law::EmpiricalLaw;
use crate::model::{validate_config, CoefficientSet, SimConfig};
use crate::rng::NoiseStream;

struct Particle {
    x: Vec<f64>,
    y: Vec<f64>,
    noise: NoiseStream,
    death: Option<usize>,
}

/// Mean-field particle system: at every step the measure argument is the
/// empirical law of the alive particles at the start of the step, so every
/// particle reads the same frozen slice. Uses the same initial draws and
/// noise streams as [`crate::integrators::simulate_ensemble`].
pub fn particle_system_run(
    cfg: &SimConfig,
    coeffs: &CoefficientSet,
    init: &InitialLaw,
) -> Result<(MeasureFlow, Ensemble), McKeanError> {
    let report = validate_config(cfg, coeffs);
    if !report.is_valid() {
        return Err(IntegratorError::Invalid(report.violations.join("; ")).into());
    }
    let interaction = coeffs
        .interaction()
        .ok_or_else(|| McKeanError::Invalid("coefficients carry no interaction".into()))?;
    let dims = cfg.dims;
    let (d1, d2, m) = (dims.d1, dims.d2, dims.m);
    let h = cfg.step;
    let steps = cfg.steps();
    let recorded = cfg.recorded_steps();

    let mut particles: Vec<Particle> = (0..cfg.particles)
        .map(|i| {
            let mut x = vec![0.0; d1];
            let mut y = vec![0.0; d2];
            init.sample(cfg.seed, i, &mut x, &mut y);
            Particle {
                x,
                y,
                noise: NoiseStream::new(cfg.seed, i as u64, m),
                death: None,
            }
        })
        .collect();
    let initial_x: Vec<f64> = particles.iter().flat_map(|p| p.x.clone()).collect();
    let initial_y: Vec<f64> = particles.iter().flat_map(|p| p.y.clone()).collect();

    let snapshot = |ps: &[Particle]| -> EmpiricalLaw {
        let x: Vec<f64> = ps.iter().flat_map(|p| p.x.iter().copied()).collect();
        let y: Vec<f64> = ps.iter().flat_map(|p| p.y.iter().copied()).collect();
        let alive: Vec<bool> = ps.iter().map(|p| p.death.is_none()).collect();
        EmpiricalLaw::from_states(d1, d2, &x, &y, &alive, None)
    };

    let mut slices = Vec::with_capacity(recorded.len());
    let mut next_rec = 0;
    for k in 0..steps {
        let current = snapshot(&particles);
        if next_rec < recorded.len() && recorded[next_rec] == k {
            slices.push(current.clone());
            next_rec += 1;
        }
        let mu = interaction.prepare(&current);
        let t = cfg.time(k);
        particles.par_iter_mut().for_each_init(
            || (StepWorkspace::new(dims), vec![0.0; m]),
            |(ws, dw), p| {
                if p.death.is_some() {
                    return;
                }
                p.noise.increments(k as u64, h, dw);
                if !step_in_place(coeffs, cfg.scheme, t, h, &mut p.x, &mut p.y, Some(&mu), dw, ws) {
                    p.death = Some(k + 1);
                }
            },
        );
    }
    if next_rec < recorded.len() {
        slices.push(snapshot(&particles));
    }
    let flow = MeasureFlow::new(h, recorded, slices, cfg.histogram.clone());
    let ensemble = Ensemble {
        config: cfg.clone(),
        initial_x,
        initial_y,
        x: particles.iter().flat_map(|p| p.x.clone()).collect(),
        y: particles.iter().flat_map(|p| p.y.clone()).collect(),
        alive: particles.iter().map(|p| p.death.is_none()).collect(),
        death_step: particles.iter().map(|p| p.death).collect(),
        paths: None,
        flow: Some(flow.clone()),
    };
    Ok((flow, ensemble))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fields::{interaction_z2, ConstantKernel, DampedKinetic, TanhKernel};
    use crate::integrators::{simulate_ensemble, SimOptions};
    use crate::model::{Dims, PhaseState};

    fn cfg() -> SimConfig {
        SimConfig::new(0.5, 0.01, 200, 3, Dims::kinetic(1)).with_record_every(0.1)
    }

    fn init() -> InitialLaw {
        InitialLaw::Gaussian {
            mean: PhaseState::new(vec![1.0], vec![-1.0]).unwrap(),
            std: 0.5,
        }
    }

    #[test]
    fn zero_coupling_matches_decoupled_run() {
        let base = DampedKinetic::new(1.0, 0.05, 1.0, 0.0).unwrap().coefficients(1);
        let c = interaction_z2(base.clone(), Arc::new(TanhKernel { coordinate: 1, dim: 1 }), 0.0, 0).unwrap();
        let (flow, ens) = particle_system_run(&cfg(), &c, &init()).unwrap();
        let direct = simulate_ensemble(&cfg(), &base, &init(), None, SimOptions::flow()).unwrap();
        assert_eq!(ens.x, direct.x);
        assert_eq!(ens.y, direct.y);
        assert_eq!(flow.slices(), direct.flow.unwrap().slices());
    }

    #[test]
    fn constant_kernel_is_a_drift_shift() {
        let base = DampedKinetic::new(1.0, 0.05, 1.0, 0.0).unwrap().coefficients(1);
        let kappa = 0.3;
        let c = interaction_z2(base.clone(), Arc::new(ConstantKernel { value: vec![0.7] }), kappa, 0).unwrap();
        let (_, ens) = particle_system_run(&cfg(), &c, &init()).unwrap();
        let z2 = base.z2_base_field().clone();
        let shifted = base.with_z2(Arc::new(move |t: f64, x: &[f64], y: &[f64], out: &mut [f64]| {
            z2.eval(t, x, y, out);
            out[0] += kappa * 0.7;
        }));
        let direct = simulate_ensemble(&cfg(), &shifted, &init(), None, SimOptions::default()).unwrap();
        assert_eq!(ens.x, direct.x);
        assert_eq!(ens.y, direct.y);
    }
}
