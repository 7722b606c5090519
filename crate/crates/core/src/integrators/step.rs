use crate::model::{CoefficientSet, Dims, MeasureArg, PhaseState, Scheme};

use super::IntegratorError;

/// Coordinates beyond this magnitude mark a particle as blown up.
pub const BLOWUP_THRESHOLD: f64 = 1e12;

/// Scratch buffers for one worker.
#[derive(Debug, Clone)]
pub struct StepWorkspace {
    z1: Vec<f64>,
    z2: Vec<f64>,
    b: Vec<f64>,
    sigma: Vec<f64>,
    scratch: Vec<f64>,
}

impl StepWorkspace {
    pub fn new(dims: Dims) -> Self {
        Self {
            z1: vec![0.0; dims.d1],
            z2: vec![0.0; dims.d2],
            b: vec![0.0; dims.d2],
            sigma: vec![0.0; dims.d2 * dims.m],
            scratch: vec![0.0; dims.d2],
        }
    }
}

/// `v / (1 + h |v|)` in place.
fn tame(v: &mut [f64], h: f64) {
    let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    let f = 1.0 + h * n;
    v.iter_mut().for_each(|a| *a /= f);
}

/// One Euler or tamed Euler step in place. Returns `false` when the new
/// state is non-finite or beyond [`BLOWUP_THRESHOLD`].
#[allow(clippy::too_many_arguments)]
pub fn step_in_place(
    coeffs: &CoefficientSet,
    scheme: Scheme,
    t: f64,
    h: f64,
    x: &mut [f64],
    y: &mut [f64],
    mu: Option<&MeasureArg>,
    dw: &[f64],
    ws: &mut StepWorkspace,
) -> bool {
    let m = dw.len();
    coeffs.eval_z1(t, x, y, &mut ws.z1);
    coeffs.eval_z2(t, x, y, mu, &mut ws.z2, &mut ws.scratch);
    coeffs.eval_b(t, y, &mut ws.b);
    coeffs.eval_sigma(t, y, &mut ws.sigma);
    for (a, b) in ws.z2.iter_mut().zip(&ws.b) {
        *a += b;
    }
    if scheme == Scheme::Tamed {
        tame(&mut ws.z1, h);
        tame(&mut ws.z2, h);
    }
    let mut ok = true;
    for (xi, v) in x.iter_mut().zip(&ws.z1) {
        *xi += h * v;
        ok &= xi.abs() <= BLOWUP_THRESHOLD;
    }
    for (i, yi) in y.iter_mut().enumerate() {
        let noise: f64 = ws.sigma[i * m..(i + 1) * m].iter().zip(dw).map(|(s, w)| s * w).sum();
        *yi += h * ws.z2[i] + noise;
        ok &= yi.abs() <= BLOWUP_THRESHOLD;
    }
    ok
}

fn step_state(
    s: &PhaseState,
    t: f64,
    h: f64,
    coeffs: &CoefficientSet,
    mu: Option<&MeasureArg>,
    dw: &[f64],
    scheme: Scheme,
) -> Result<PhaseState, IntegratorError> {
    let dims = coeffs.dims();
    if !(h > 0.0) {
        return Err(IntegratorError::Invalid("step must be positive".into()));
    }
    if s.d1() != dims.d1 || s.d2() != dims.d2 || dw.len() != dims.m {
        return Err(IntegratorError::Invalid("state or increment dimension mismatch".into()));
    }
    let mut x = s.x().to_vec();
    let mut y = s.y().to_vec();
    let mut ws = StepWorkspace::new(dims);
    if !step_in_place(coeffs, scheme, t, h, &mut x, &mut y, mu, dw, &mut ws) {
        return Err(IntegratorError::Blowup { t: t + h });
    }
    PhaseState::new(x, y).map_err(|_| IntegratorError::Blowup { t: t + h })
}

/// Euler-Maruyama step: `x' = x + h Z1`, `y' = y + h (Z2 + b) + sigma dW`.
pub fn em_step(
    s: &PhaseState,
    t: f64,
    h: f64,
    coeffs: &CoefficientSet,
    mu: Option<&MeasureArg>,
    dw: &[f64],
) -> Result<PhaseState, IntegratorError> {
    step_state(s, t, h, coeffs, mu, dw, Scheme::Euler)
}

/// As [`em_step`] with each drift vector `v` replaced by `v / (1 + h |v|)`;
/// the velocity drift is tamed as the sum `Z2 + b`.
pub fn tamed_em_step(
    s: &PhaseState,
    t: f64,
    h: f64,
    coeffs: &CoefficientSet,
    mu: Option<&MeasureArg>,
    dw: &[f64],
) -> Result<PhaseState, IntegratorError> {
    step_state(s, t, h, coeffs, mu, dw, Scheme::Tamed)
}
