use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::Dims;
use crate::fields::basic::{ConstantSpace, ScaledIdentity, ZeroPhase};
use crate::law::EmpiricalLaw;

/// A time-dependent vector field on phase space, `(t, x, y) -> R^k`.
///
/// Implementations must be pure: evaluation may happen concurrently from
/// many workers.
pub trait PhaseField: Send + Sync {
    fn eval(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]);
}

/// A time-dependent field on the noisy component, `(t, y) -> R^k`.
///
/// Matrix-valued fields (the diffusion coefficient) write `d2 x m` entries in
/// row-major order.
pub trait SpaceField: Send + Sync {
    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]);
}

impl<F> PhaseField for F
where
    F: Fn(f64, &[f64], &[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        self(t, x, y, out)
    }
}

impl<F> SpaceField for F
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    fn eval(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self(t, y, out)
    }
}

/// Bounded interaction kernel `W(x, y, x', y') -> R^{d2}` with `|W| <= declared_bound()`.
pub trait InteractionKernel: Send + Sync {
    /// Output dimension (must equal `d2` of the system it is attached to).
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], y: &[f64], x_other: &[f64], y_other: &[f64], out: &mut [f64]);

    /// True when `W` ignores the evaluation point `(x, y)`. The particle
    /// average is then shared by every particle and computed once per step.
    fn source_only(&self) -> bool {
        false
    }

    /// Declared sup-norm bound, checked by sampling on construction.
    fn declared_bound(&self) -> f64 {
        1.0
    }
}

/// Measure argument handed to a measure-dependent drift.
#[derive(Debug, Clone)]
pub enum MeasureArg<'a> {
    /// Precomputed average `int W dmu`, valid for source-only kernels.
    Average(Vec<f64>),
    /// A particle cloud averaged at every evaluation point.
    Law(&'a EmpiricalLaw),
}

/// `kappa * int W(x, y, .) dmu`, the measure-dependent part of `Z2`.
#[derive(Clone)]
pub struct Interaction {
    kernel: Arc<dyn InteractionKernel>,
    kappa: f64,
}

impl std::fmt::Debug for Interaction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Interaction")
            .field("kappa", &self.kappa)
            .finish_non_exhaustive()
    }
}

impl Interaction {
    pub(crate) fn new_unchecked(kernel: Arc<dyn InteractionKernel>, kappa: f64) -> Self {
        Self { kernel, kappa }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn kernel(&self) -> &Arc<dyn InteractionKernel> {
        &self.kernel
    }

    /// Prepares the measure argument for one time slice. Source-only kernels
    /// are averaged here once; otherwise the law is kept for pointwise averaging.
    pub fn prepare<'a>(&self, law: &'a EmpiricalLaw) -> MeasureArg<'a> {
        if self.kernel.source_only() {
            let mut avg = vec![0.0; self.kernel.dim()];
            kernel_average(self.kernel.as_ref(), &[], &[], law, &mut avg);
            MeasureArg::Average(avg)
        } else {
            MeasureArg::Law(law)
        }
    }

    /// Writes `int W(x, y, .) dmu` into `out`. With no measure the Dirac mass
    /// at the origin is used.
    pub fn average(&self, x: &[f64], y: &[f64], mu: Option<&MeasureArg>, out: &mut [f64]) {
        match mu {
            Some(MeasureArg::Average(avg)) => out.copy_from_slice(avg),
            Some(MeasureArg::Law(law)) => kernel_average(self.kernel.as_ref(), x, y, law, out),
            None => {
                let zx = vec![0.0; x.len()];
                let zy = vec![0.0; y.len()];
                self.kernel.eval(x, y, &zx, &zy, out);
            }
        }
    }
}

/// Weighted particle average of `W(x, y, x_i, y_i)` over the alive particles,
/// as a running mean so that a constant kernel averages to itself exactly.
fn kernel_average(kernel: &dyn InteractionKernel, x: &[f64], y: &[f64], law: &EmpiricalLaw, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let mut value = vec![0.0; out.len()];
    let mut cumulative = 0.0;
    for i in 0..law.len() {
        let w = law.raw_weight(i);
        if w <= 0.0 {
            continue;
        }
        cumulative += w;
        let f = w / cumulative;
        kernel.eval(x, y, law.x(i), law.y(i), &mut value);
        for (o, v) in out.iter_mut().zip(&value) {
            *o += f * (v - *o);
        }
    }
}

/// Growth class of the drift; superlinear drifts require the tamed scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    Linear,
    Superlinear,
}

/// `(sup |sigma|, sup |(sigma sigma^T)^{-1}|)`, both required finite and positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaBounds {
    pub sup: f64,
    pub inverse_sup: f64,
}

impl SigmaBounds {
    /// Bounds of `s * I`.
    pub fn scalar(s: f64) -> Self {
        Self {
            sup: s.abs(),
            inverse_sup: 1.0 / (s * s),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.sup.is_finite() && self.inverse_sup.is_finite() && self.sup > 0.0 && self.inverse_sup > 0.0
    }
}

/// The coefficients `Z1, Z2, b, sigma` of one system. Cheap to clone.
#[derive(Clone)]
pub struct CoefficientSet {
    dims: Dims,
    z1: Arc<dyn PhaseField>,
    z2: Arc<dyn PhaseField>,
    interaction: Option<Interaction>,
    b: Arc<dyn SpaceField>,
    sigma: Arc<dyn SpaceField>,
    sigma_bounds: SigmaBounds,
    growth: Growth,
}

impl std::fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("dims", &self.dims)
            .field("interaction", &self.interaction)
            .field("sigma_bounds", &self.sigma_bounds)
            .field("growth", &self.growth)
            .finish_non_exhaustive()
    }
}

impl CoefficientSet {
    /// A classical set with `b = 0` and linear growth.
    pub fn new(
        dims: Dims,
        z1: Arc<dyn PhaseField>,
        z2: Arc<dyn PhaseField>,
        sigma: Arc<dyn SpaceField>,
        sigma_bounds: SigmaBounds,
    ) -> Self {
        Self {
            dims,
            z1,
            z2,
            interaction: None,
            b: Arc::new(ConstantSpace::zeros(dims.d2)),
            sigma,
            sigma_bounds,
            growth: Growth::Linear,
        }
    }

    /// All drifts zero and `sigma = I` (requires `d2 = m`).
    pub fn zero(dims: Dims) -> Self {
        Self::new(
            dims,
            Arc::new(ZeroPhase),
            Arc::new(ZeroPhase),
            Arc::new(ScaledIdentity::new(1.0, dims.d2, dims.m)),
            SigmaBounds::scalar(1.0),
        )
    }

    pub fn with_b(mut self, b: Arc<dyn SpaceField>) -> Self {
        self.b = b;
        self
    }

    pub fn with_z1(mut self, z1: Arc<dyn PhaseField>) -> Self {
        self.z1 = z1;
        self
    }

    pub fn with_z2(mut self, z2: Arc<dyn PhaseField>) -> Self {
        self.z2 = z2;
        self
    }

    pub fn with_sigma(mut self, sigma: Arc<dyn SpaceField>, bounds: SigmaBounds) -> Self {
        self.sigma = sigma;
        self.sigma_bounds = bounds;
        self
    }

    pub fn with_growth(mut self, growth: Growth) -> Self {
        self.growth = growth;
        self
    }

    pub fn with_interaction(mut self, interaction: Option<Interaction>) -> Self {
        self.interaction = interaction;
        self
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    pub fn sigma_bounds(&self) -> SigmaBounds {
        self.sigma_bounds
    }

    pub fn interaction(&self) -> Option<&Interaction> {
        self.interaction.as_ref()
    }

    /// True when `Z2` ignores its measure argument.
    pub fn is_classical(&self) -> bool {
        self.interaction.is_none()
    }

    pub fn z1_field(&self) -> &Arc<dyn PhaseField> {
        &self.z1
    }

    pub fn z2_base_field(&self) -> &Arc<dyn PhaseField> {
        &self.z2
    }

    pub fn b_field(&self) -> &Arc<dyn SpaceField> {
        &self.b
    }

    pub fn sigma_field(&self) -> &Arc<dyn SpaceField> {
        &self.sigma
    }

    pub fn eval_z1(&self, t: f64, x: &[f64], y: &[f64], out: &mut [f64]) {
        self.z1.eval(t, x, y, out);
    }

    /// `Z2(t, x, y, mu)`. Measure-dependent sets evaluated without a measure
    /// use the Dirac mass at the origin.
    pub fn eval_z2(&self, t: f64, x: &[f64], y: &[f64], mu: Option<&MeasureArg>, out: &mut [f64], scratch: &mut [f64]) {
        self.z2.eval(t, x, y, out);
        if let Some(inter) = &self.interaction {
            if inter.kappa != 0.0 {
                inter.average(x, y, mu, scratch);
                for (o, a) in out.iter_mut().zip(scratch.iter()) {
                    *o += inter.kappa * a;
                }
            }
        }
    }

    pub fn eval_b(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self.b.eval(t, y, out);
    }

    pub fn eval_sigma(&self, t: f64, y: &[f64], out: &mut [f64]) {
        self.sigma.eval(t, y, out);
    }
}
