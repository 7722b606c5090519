use std::sync::Arc;

use ksde_core::ergodicity::{moment_bound_check, MomentVerdict};
use ksde_core::fields::basic::{linear_langevin, ScaledIdentity};
use ksde_core::fields::{DampedKinetic, LyapunovV};
use ksde_core::integrators::{
    girsanov_weighted_law, khasminskii_estimate, simulate_ensemble, InitialLaw, ShiftField, SimOptions,
};
use ksde_core::model::{CoefficientSet, Dims, Growth, PhaseState, Scheme, SigmaBounds, SimConfig};
use ksde_core::stats::{mean, standard_error};

fn dirac(x: f64, y: f64) -> InitialLaw {
    InitialLaw::Dirac(PhaseState::new(vec![x], vec![y]).unwrap())
}

fn column(ens: &ksde_core::integrators::Ensemble, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    (0..ens.len())
        .filter(|i| ens.alive[*i])
        .map(|i| f(ens.x[i], ens.y[i]))
        .collect()
}

#[test]
fn ou_velocity_variance_tends_to_one_half() {
    let coeffs = DampedKinetic::new(1.0, 0.0, 1.0, 0.0).unwrap().coefficients(1);
    let cfg = SimConfig::new(6.0, 2e-3, 10_000, 17, Dims::kinetic(1));
    let ens = simulate_ensemble(&cfg, &coeffs, &dirac(0.0, 0.0), None, SimOptions::default()).unwrap();
    let y = column(&ens, |_, y| y);
    let m = mean(&y);
    let sq: Vec<f64> = y.iter().map(|v| (v - m) * (v - m)).collect();
    let var = mean(&sq);
    assert!((var - 0.5).abs() < 3.0 * standard_error(&sq), "Var(Y_T) = {var}");
}

#[test]
fn halving_the_step_stays_within_monte_carlo_error() {
    let coeffs = linear_langevin(1, 1.0);
    let run = |h: f64, seed: u64| {
        let cfg = SimConfig::new(2.0, h, 10_000, seed, Dims::kinetic(1));
        simulate_ensemble(&cfg, &coeffs, &dirac(1.0, 0.0), None, SimOptions::default()).unwrap()
    };
    let (coarse, fine) = (run(0.02, 1), run(0.01, 2));
    let moments: [fn(f64, f64) -> f64; 4] = [|x, _| x, |_, y| y, |x, _| x * x, |_, y| y * y];
    for f in moments {
        let (a, b) = (column(&coarse, f), column(&fine, f));
        let se = (standard_error(&a).powi(2) + standard_error(&b).powi(2)).sqrt();
        assert!(
            (mean(&a) - mean(&b)).abs() < 3.0 * se,
            "{} vs {} (se {se})",
            mean(&a),
            mean(&b)
        );
    }
}

fn cubic() -> CoefficientSet {
    let dims = Dims::kinetic(1);
    CoefficientSet::zero(dims)
        .with_z2(Arc::new(|_t: f64, _x: &[f64], y: &[f64], o: &mut [f64]| {
            o[0] = -y[0] * y[0] * y[0]
        }))
        .with_sigma(Arc::new(ScaledIdentity::new(1.0, 1, 1)), SigmaBounds::scalar(1.0))
        .with_growth(Growth::Superlinear)
}

#[test]
fn tamed_cubic_drift_matches_a_fine_reference() {
    let coeffs = cubic();
    let init = dirac(0.0, 2.0);
    let run = |h: f64, seed: u64| {
        let cfg = SimConfig::new(1.0, h, 2_000, seed, Dims::kinetic(1)).with_scheme(Scheme::Tamed);
        simulate_ensemble(&cfg, &coeffs, &init, None, SimOptions::default()).unwrap()
    };
    let (coarse, fine) = (run(1e-3, 5), run(1e-5, 6));
    assert_eq!(coarse.dead_count() + fine.dead_count(), 0);
    for f in [|_: f64, y: f64| y, |_: f64, y: f64| y * y] {
        let (a, b) = (column(&coarse, f), column(&fine, f));
        let se = (standard_error(&a).powi(2) + standard_error(&b).powi(2)).sqrt();
        assert!(
            (mean(&a) - mean(&b)).abs() < 3.0 * se,
            "{} vs {} (se {se})",
            mean(&a),
            mean(&b)
        );
    }
}

fn grid_starts(radii: &[f64]) -> InitialLaw {
    InitialLaw::Points(
        radii
            .iter()
            .map(|r| PhaseState::new(vec![*r], vec![0.0]).unwrap())
            .collect(),
    )
}

#[test]
fn stable_langevin_moments_are_bounded() {
    // the noise adds O(1) to sup V regardless of the start, so the factor-2
    // band across V0 in {2, 10, 101} only holds on short horizons
    let cfg = SimConfig::new(0.5, 1e-2, 3_000, 23, Dims::kinetic(1));
    let ens = simulate_ensemble(
        &cfg,
        &linear_langevin(1, 1.0),
        &grid_starts(&[1.0, 3.0, 10.0]),
        None,
        SimOptions::paths(),
    )
    .unwrap();
    let rep = moment_bound_check(&ens, &LyapunovV::new(1.0, 1, 1).unwrap()).unwrap();
    assert_eq!(rep.groups.len(), 3);
    assert_eq!(rep.verdict, MomentVerdict::Bounded, "{:?}", rep.groups);
}

#[test]
fn zero_dynamics_have_unit_moment_ratio() {
    let dims = Dims::kinetic(1);
    let coeffs =
        CoefficientSet::zero(dims).with_sigma(Arc::new(ScaledIdentity::new(0.0, 1, 1)), SigmaBounds::scalar(1.0));
    let cfg = SimConfig::new(1.0, 0.1, 6, 1, dims);
    let ens = simulate_ensemble(
        &cfg,
        &coeffs,
        &grid_starts(&[1.0, 3.0, 10.0]),
        None,
        SimOptions::paths(),
    )
    .unwrap();
    let rep = moment_bound_check(&ens, &LyapunovV::new(1.0, 1, 1).unwrap()).unwrap();
    assert!(rep.groups.iter().all(|g| g.ratio == 1.0));
}

#[test]
fn flipped_damping_is_unbounded() {
    let coeffs = DampedKinetic::unchecked(-1.0, 0.05, 1.0, 1.0).coefficients(1);
    let cfg = SimConfig::new(5.0, 1e-2, 300, 29, Dims::kinetic(1)).with_scheme(Scheme::Tamed);
    let ens = simulate_ensemble(
        &cfg,
        &coeffs,
        &grid_starts(&[1.0, 3.0, 10.0]),
        None,
        SimOptions::paths(),
    )
    .unwrap();
    let rep = moment_bound_check(&ens, &LyapunovV::new(1.0, 1, 1).unwrap()).unwrap();
    assert_eq!(rep.verdict, MomentVerdict::Unbounded);
}

struct TanhVelocity;

impl ShiftField for TanhVelocity {
    fn eval(&self, _step: usize, _t: f64, _x: &[f64], y: &[f64], out: &mut [f64]) {
        out[0] = y[0].tanh();
    }
}

#[test]
fn bounded_shift_weights_are_martingales() {
    let coeffs = DampedKinetic::new(1.0, 0.05, 1.0, 0.0).unwrap().coefficients(1);
    let cfg = SimConfig::new(1.0, 1e-2, 10_000, 31, Dims::kinetic(1));
    let ens = simulate_ensemble(&cfg, &coeffs, &dirac(1.0, 1.0), None, SimOptions::paths()).unwrap();
    let s = girsanov_weighted_law(&ens, &TanhVelocity).unwrap().stats;
    assert!(
        (s.mean_weight - 1.0).abs() < 3.0 * s.weight_se,
        "{} +- {}",
        s.mean_weight,
        s.weight_se
    );
}

#[test]
fn khasminskii_interval_shrinks_with_more_paths() {
    let coeffs = linear_langevin(1, 1.0);
    let f = |_t: f64, y: &[f64]| y[0].sin();
    let run = |n: usize| {
        let cfg = SimConfig::new(1.0, 1e-2, n, 37, Dims::kinetic(1));
        khasminskii_estimate(&cfg, &coeffs, &dirac(0.0, 0.0), &f, 400, 0.95, None).unwrap()
    };
    let (a, b) = (run(4_000), run(8_000));
    let ratio = (b.ci_high - b.ci_low) / (a.ci_high - a.ci_low);
    assert!((0.55..0.9).contains(&ratio), "width ratio {ratio}");
    assert!(a.ci_low <= b.ci_high && b.ci_low <= a.ci_high);
}
