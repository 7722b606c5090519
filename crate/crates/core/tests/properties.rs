use std::sync::Arc;

use ksde_core::ergodicity::{empirical_v_distance, empirical_var_distance, h_envelope, HistogramLaw, VWeight};
use ksde_core::fields::basic::linear_langevin;
use ksde_core::fields::{DampedKinetic, LyapunovV, PhiFamily, RieszDrift};
use ksde_core::mckean_vlasov::{rho_lambda, MeasureFlow};
use ksde_core::model::{
    lpq_norm_with_exponents, AdmissiblePair, CenterSet, CoefficientSet, HistogramSpec, NormGrid, PhaseField,
};
use ksde_core::verifier::{
    check_drift_condition, drift_lhs, search_constants, shell_offsets, SampleSpec, TailPolicy, Verdict,
};
use ksde_core::EmpiricalLaw;
use proptest::prelude::*;

fn spec_2d() -> HistogramSpec {
    HistogramSpec {
        min: vec![-2.0, -2.0],
        max: vec![2.0, 2.0],
        bins: vec![4, 4],
    }
}

fn histogram(masses: Vec<f64>) -> HistogramLaw {
    let total: f64 = masses.iter().sum::<f64>() + 1.0;
    let lost = 1.0 / total;
    HistogramLaw::from_masses(spec_2d(), masses.iter().map(|m| m / total).collect(), lost).unwrap()
}

fn masses() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, 16)
}

fn law(points: &[f64]) -> EmpiricalLaw {
    EmpiricalLaw::new(1, 1, points.to_vec())
}

fn flow_of(points: &[Vec<f64>]) -> MeasureFlow {
    let slices = points.iter().map(|p| law(p)).collect();
    MeasureFlow::new(0.25, (0..points.len()).collect(), slices, spec_2d())
}

fn flow_points(slices: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-2.5f64..2.5, 20), slices)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn variation_distance_is_a_metric(a in masses(), b in masses(), c in masses()) {
        let (a, b, c) = (histogram(a), histogram(b), histogram(c));
        let ab = empirical_var_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, empirical_var_distance(&b, &a).unwrap());
        prop_assert_eq!(empirical_var_distance(&a, &a).unwrap(), 0.0);
        let ac = empirical_var_distance(&a, &c).unwrap();
        let cb = empirical_var_distance(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-15);
        prop_assert!((0.0..=2.0 + 1e-15).contains(&ab));
    }

    #[test]
    fn v_distance_dominates_variation_distance(a in masses(), b in masses(), theta in 0.1f64..2.0) {
        let (a, b) = (histogram(a), histogram(b));
        let v = VWeight::Lyapunov(LyapunovV::new(theta, 1, 1).unwrap());
        prop_assert!(empirical_v_distance(&a, &b, &v).unwrap() >= empirical_var_distance(&a, &b).unwrap());
    }

    #[test]
    fn rho_is_a_metric_nonincreasing_in_lambda(
        a in flow_points(3), b in flow_points(3), c in flow_points(3), l1 in 0.0f64..3.0, dl in 0.0f64..3.0,
    ) {
        let (a, b, c) = (flow_of(&a), flow_of(&b), flow_of(&c));
        let ab = rho_lambda(&a, &b, l1).unwrap();
        prop_assert_eq!(ab, rho_lambda(&b, &a, l1).unwrap());
        prop_assert_eq!(rho_lambda(&a, &a, l1).unwrap(), 0.0);
        prop_assert!(ab <= rho_lambda(&a, &c, l1).unwrap() + rho_lambda(&c, &b, l1).unwrap() + 1e-15);
        prop_assert!(rho_lambda(&a, &b, l1 + dl).unwrap() <= ab);
    }

    #[test]
    fn admissibility_is_exactly_the_strict_inequality(p in 2.01f64..20.0, q in 2.01f64..20.0, d2 in 1usize..4) {
        let ok = (d2 as f64) / p + 2.0 / q < 1.0;
        prop_assert_eq!(AdmissiblePair::new(p, q, d2).is_ok(), ok);
    }

    #[test]
    fn riesz_is_odd_for_symmetric_atoms(x in -5.0f64..5.0, y in -5.0f64..5.0, a in 0.1f64..2.0, alpha in 0.05f64..0.95) {
        let b = RieszDrift::new(vec![(vec![a, -a], 1.0), (vec![-a, a], 1.0)], alpha, 1e-6).unwrap();
        let mut plus = [0.0; 2];
        let mut minus = [0.0; 2];
        b.eval_into(&[x, y], &mut plus);
        b.eval_into(&[-x, -y], &mut minus);
        prop_assert_eq!(plus[0], -minus[0]);
        prop_assert_eq!(plus[1], -minus[1]);
    }

    #[test]
    fn riesz_ignores_the_floor_away_from_atoms(x in 0.01f64..5.0, s in prop::bool::ANY, alpha in 0.05f64..0.95) {
        let x = if s { x } else { -x };
        let coarse = RieszDrift::single(1, 1.0, alpha, 1e-3).unwrap();
        let fine = coarse.with_floor(1e-8).unwrap();
        prop_assert_eq!(coarse.magnitude(&[x]), fine.magnitude(&[x]));
    }

    #[test]
    fn lyapunov_derivatives_match_finite_differences(
        x in prop::collection::vec(-3.0f64..3.0, 2),
        y in prop::collection::vec(-3.0f64..3.0, 2),
        theta in prop::sample::select(vec![0.5, 1.0, 2.0]),
    ) {
        let v = LyapunovV::new(theta, 2, 2).unwrap();
        let e = v.eval(&x, &y);
        let h = 1e-5;
        let rel = |fd: f64, exact: f64| (fd - exact).abs() / exact.abs().max(1.0);
        for i in 0..2 {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            prop_assert!(rel((v.value(&xp, &y) - v.value(&xm, &y)) / (2.0 * h), e.grad_x[i]) < 1e-6);
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[i] += h;
            ym[i] -= h;
            prop_assert!(rel((v.value(&x, &yp) - v.value(&x, &ym)) / (2.0 * h), e.grad_y[i]) < 1e-6);
            for j in 0..2 {
                let gy = |x: &[f64], y: &[f64]| v.eval(x, y).grad_y[j];
                prop_assert!(rel((gy(&x, &yp) - gy(&x, &ym)) / (2.0 * h), e.hess_yy[i * 2 + j]) < 1e-6);
                prop_assert!(rel((gy(&xp, &y) - gy(&xm, &y)) / (2.0 * h), e.hess_xy[i * 2 + j]) < 1e-6);
            }
        }
    }

    #[test]
    fn envelope_is_nonincreasing(v0 in 1.0f64..50.0, k in 0.1f64..10.0, lambda in 0.01f64..2.0, beta in 0.2f64..2.0) {
        let phi = PhiFamily::Superlinear { c0: 1.0, beta };
        let times: Vec<f64> = (0..60).map(|i| i as f64 * 0.2).collect();
        let env = h_envelope(&phi, v0, k, lambda, &times).unwrap();
        prop_assert_eq!(env[0], k * (1.0 + v0));
        prop_assert!(env.windows(2).all(|w| w[1] <= w[0]));
    }
}

fn scaled(coeffs: &CoefficientSet, s: f64) -> CoefficientSet {
    let (z1, z2) = (coeffs.z1_field().clone(), coeffs.z2_base_field().clone());
    let z1s: Arc<dyn PhaseField> = Arc::new(move |t: f64, x: &[f64], y: &[f64], o: &mut [f64]| {
        z1.eval(t, x, y, o);
        o.iter_mut().for_each(|v| *v *= s);
    });
    let z2s: Arc<dyn PhaseField> = Arc::new(move |t: f64, x: &[f64], y: &[f64], o: &mut [f64]| {
        z2.eval(t, x, y, o);
        o.iter_mut().for_each(|v| *v *= s);
    });
    coeffs.clone().with_z1(z1s).with_z2(z2s)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn drift_lhs_scales_linearly(
        x in -20.0f64..20.0, y in -20.0f64..20.0, s in 0.01f64..10.0, eps in 0.01f64..0.9,
    ) {
        let coeffs = DampedKinetic::new(1.0, 0.05, 1.0, 0.0).unwrap().coefficients(1);
        let v = LyapunovV::new(1.0, 1, 1).unwrap();
        let offsets = shell_offsets(1, eps, 32, 0);
        let base = drift_lhs(&coeffs, &v, eps, &offsets, &[x], &[y]);
        let big = drift_lhs(&scaled(&coeffs, s), &v, eps, &offsets, &[x], &[y]);
        prop_assert!((big - s * base).abs() <= 1e-12 * (1.0 + (s * base).abs()));
    }

    #[test]
    fn empirical_mean_is_permutation_invariant(mut pts in prop::collection::vec(-3.0f64..3.0, 2..40)) {
        if pts.len() % 2 == 1 {
            pts.pop();
        }
        let a = law(&pts);
        let mut pairs: Vec<[f64; 2]> = pts.chunks(2).map(|c| [c[0], c[1]]).collect();
        pairs.reverse();
        let b = law(&pairs.concat());
        let (ma, mb) = (a.mean(), b.mean());
        prop_assert!((ma[0] - mb[0]).abs() < 1e-12 && (ma[1] - mb[1]).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn searched_constants_are_certified(c1 in 0.5f64..2.0, c3 in 0.5f64..2.0, c2 in -0.2f64..0.2) {
        let coeffs = DampedKinetic::new(c1, c2, c3, 0.0).unwrap().coefficients(1);
        let v = LyapunovV::new(1.0, 1, 1).unwrap();
        let spec = SampleSpec::new(30.0, 12, 16);
        let phi = PhiFamily::Linear { c0: 1.0 };
        let found = search_constants(&coeffs, &v, &phi, 0.1, &spec, TailPolicy::Dissipative, 100.0).unwrap();
        let rep = check_drift_condition(&coeffs, &v, &PhiFamily::Linear { c0: found.c0 }, found.k, 0.1, &spec).unwrap();
        prop_assert_eq!(rep.verdict, Verdict::Holds);
    }

    #[test]
    fn lpq_norm_is_homogeneous_and_subadditive(c in 0.0f64..5.0, a in 0.1f64..3.0, w in 0.5f64..3.0) {
        let grid = NormGrid { ball_cells: 64, time_points: 8 };
        let centers = CenterSet::lattice(&[-1.0], &[1.0], 5);
        let f = move |_t: f64, y: &[f64]| (a * y[0]).sin().abs() + 1.0;
        let g = move |t: f64, y: &[f64]| (w * y[0] + t).cos().abs();
        let norm = |h: &(dyn Fn(f64, &[f64]) -> f64 + Sync)| lpq_norm_with_exponents(h, 4.0, 4.0, 1.0, &grid, &centers).unwrap().value;
        let nf = norm(&f);
        let scaled = move |t: f64, y: &[f64]| c * f(t, y);
        prop_assert!((norm(&scaled) - c * nf).abs() <= 1e-10 * (1.0 + c * nf));
        let sum = move |t: f64, y: &[f64]| f(t, y) + g(t, y);
        prop_assert!(norm(&sum) <= nf + norm(&g) + 1e-10);
    }
}

#[test]
fn langevin_lhs_matches_inner_products_at_zero_shell() {
    // eps -> 0 leaves only the inner products 2 x Z1 + 2 y Z2 = -2 gamma y^2
    let coeffs = linear_langevin(1, 1.0);
    let v = LyapunovV::new(1.0, 1, 1).unwrap();
    let offsets = shell_offsets(1, 1e-12, 8, 0);
    let lhs = drift_lhs(&coeffs, &v, 1e-12, &offsets, &[0.7], &[-1.3]);
    assert!((lhs + 2.0 * 1.3 * 1.3).abs() < 1e-9);
}
