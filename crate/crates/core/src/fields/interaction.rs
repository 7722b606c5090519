use std::sync::Arc;

use super::FieldError;
use crate::model::{CoefficientSet, Interaction, InteractionKernel};
use crate::rng::{derive_seed, fill_normals, salt, stream_rng};

/// `W_i(x, y, x', y') = tanh(z'_k)` for every output component, where `z'` is
/// the concatenated other particle `[x', y']` and `k` a fixed coordinate.
/// Ignores the evaluation point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TanhKernel {
    pub coordinate: usize,
    pub dim: usize,
}

impl InteractionKernel for TanhKernel {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _x: &[f64], _y: &[f64], x_other: &[f64], y_other: &[f64], out: &mut [f64]) {
        let z = if self.coordinate < x_other.len() {
            x_other[self.coordinate]
        } else {
            y_other[self.coordinate - x_other.len()]
        };
        out.iter_mut().for_each(|v| *v = z.tanh());
    }

    fn source_only(&self) -> bool {
        true
    }
}

/// `W = w` for a constant vector with `|w_i| <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantKernel {
    pub value: Vec<f64>,
}

impl InteractionKernel for ConstantKernel {
    fn dim(&self) -> usize {
        self.value.len()
    }

    fn eval(&self, _x: &[f64], _y: &[f64], _xo: &[f64], _yo: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.value);
    }

    fn source_only(&self) -> bool {
        true
    }
}

/// `W_i = tanh(y'_i - y_i)`: pulls each particle's velocity toward the others.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityAttraction {
    pub dim: usize,
}

impl InteractionKernel for VelocityAttraction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, _x: &[f64], y: &[f64], _xo: &[f64], y_other: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            out[i] = (y_other[i] - y[i]).tanh();
        }
    }
}

/// Number of random points used to spot-check a kernel's declared bound.
pub const KERNEL_CHECK_SAMPLES: usize = 512;

/// Attaches `kappa * int W dmu` to the velocity drift of `base`.
///
/// The kernel's declared bound must be at most 1 and is checked at
/// [`KERNEL_CHECK_SAMPLES`] Gaussian points of scale 3 drawn from `seed`.
pub fn interaction_z2(
    base: CoefficientSet,
    kernel: Arc<dyn InteractionKernel>,
    kappa: f64,
    seed: u64,
) -> Result<CoefficientSet, FieldError> {
    let dims = base.dims();
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(FieldError::InvalidParameter(format!(
            "kappa must be nonnegative, got {kappa}"
        )));
    }
    if kernel.dim() != dims.d2 {
        return Err(FieldError::InvalidParameter(format!(
            "kernel dimension {} differs from d2 = {}",
            kernel.dim(),
            dims.d2
        )));
    }
    let bound = kernel.declared_bound();
    if !(bound <= 1.0) {
        return Err(FieldError::KernelBoundViolated {
            value: bound,
            bound: 1.0,
        });
    }
    let mut rng = stream_rng(derive_seed(seed, salt::KERNEL_CHECK), 0);
    let d = dims.phase();
    let mut a = vec![0.0; d];
    let mut b = vec![0.0; d];
    let mut out = vec![0.0; dims.d2];
    for _ in 0..KERNEL_CHECK_SAMPLES {
        fill_normals(&mut rng, &mut a);
        fill_normals(&mut rng, &mut b);
        a.iter_mut().chain(b.iter_mut()).for_each(|v| *v *= 3.0);
        kernel.eval(&a[..dims.d1], &a[dims.d1..], &b[..dims.d1], &b[dims.d1..], &mut out);
        let sup = out.iter().fold(0.0f64, |m, v| {
            if m.is_nan() || v.is_nan() {
                f64::NAN
            } else {
                m.max(v.abs())
            }
        });
        if !(sup <= bound) {
            return Err(FieldError::KernelBoundViolated { value: sup, bound });
        }
    }
    Ok(base.with_interaction(Some(Interaction::new_unchecked(kernel, kappa))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::EmpiricalLaw;
    use crate::model::{Dims, MeasureArg};

    struct Loud;
    impl InteractionKernel for Loud {
        fn dim(&self) -> usize {
            1
        }
        fn eval(&self, _x: &[f64], _y: &[f64], xo: &[f64], _yo: &[f64], out: &mut [f64]) {
            out[0] = xo[0];
        }
    }

    fn z2(c: &CoefficientSet, x: f64, y: f64, mu: Option<&MeasureArg>) -> f64 {
        let mut out = [0.0];
        c.eval_z2(0.0, &[x], &[y], mu, &mut out, &mut [0.0]);
        out[0]
    }

    #[test]
    fn zero_coupling_is_base() {
        let base = crate::fields::basic::linear_langevin(1, 1.0);
        let c = interaction_z2(base.clone(), Arc::new(TanhKernel { coordinate: 0, dim: 1 }), 0.0, 1).unwrap();
        let law = EmpiricalLaw::new(1, 1, vec![1.0, 2.0, -0.5, 0.3]);
        let arg = c.interaction().unwrap().prepare(&law);
        assert_eq!(z2(&c, 0.7, -0.2, Some(&arg)), z2(&base, 0.7, -0.2, None));
    }

    #[test]
    fn constant_kernel_shifts_exactly() {
        let base = crate::fields::basic::linear_langevin(1, 1.0);
        let c = interaction_z2(base.clone(), Arc::new(ConstantKernel { value: vec![0.3] }), 0.5, 1).unwrap();
        let law = EmpiricalLaw::new(1, 1, vec![1.0, 2.0, -0.5, 0.3, 9.0, 9.0]).with_weights(vec![0.2, 0.5, 0.3]);
        let arg = c.interaction().unwrap().prepare(&law);
        assert_eq!(z2(&c, 0.7, -0.2, Some(&arg)), z2(&base, 0.7, -0.2, None) + 0.5 * 0.3);
    }

    #[test]
    fn odd_kernel_cancels_on_symmetric_law() {
        let base = crate::fields::basic::linear_langevin(1, 1.0);
        let c = interaction_z2(base.clone(), Arc::new(TanhKernel { coordinate: 0, dim: 1 }), 0.4, 1).unwrap();
        let law = EmpiricalLaw::new(1, 1, vec![1.5, 0.2, -1.5, -3.0]);
        let arg = c.interaction().unwrap().prepare(&law);
        assert!((z2(&c, 0.1, 0.1, Some(&arg)) - z2(&base, 0.1, 0.1, None)).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_in_measure() {
        // finitely supported laws with exact variation distance
        let base = CoefficientSet::zero(Dims::kinetic(1));
        let kappa = 0.3;
        let c = interaction_z2(base, Arc::new(VelocityAttraction { dim: 1 }), kappa, 1).unwrap();
        let mu = EmpiricalLaw::new(1, 1, vec![0.0, 1.0, 0.0, -2.0]).with_weights(vec![0.5, 0.5]);
        let nu = EmpiricalLaw::new(1, 1, vec![0.0, 1.0, 0.0, -2.0]).with_weights(vec![0.9, 0.1]);
        let var = 2.0 * 0.4;
        let inter = c.interaction().unwrap();
        for y in [-3.0, -0.5, 0.0, 2.0] {
            let a = z2(&c, 0.0, y, Some(&inter.prepare(&mu)));
            let b = z2(&c, 0.0, y, Some(&inter.prepare(&nu)));
            assert!((a - b).abs() <= kappa * var + 1e-15);
        }
    }

    #[test]
    fn unbounded_kernel_rejected() {
        let base = CoefficientSet::zero(Dims::kinetic(1));
        let err = interaction_z2(base, Arc::new(Loud), 1.0, 3).unwrap_err();
        assert!(matches!(err, FieldError::KernelBoundViolated { .. }));
    }
}
