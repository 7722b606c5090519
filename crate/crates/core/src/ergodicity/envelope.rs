use serde::{Deserialize, Serialize};

use super::DiagError;
use crate::fields::{phi_eval, PhiFamily};

/// `H(r) = int_0^r ds / Phi(s)` for a superlinear `Phi`, with the inverse
/// extended by `H^{-1}(r) = 0` for `r <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HFunction {
    phi: PhiFamily,
    tolerance: f64,
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Adaptive Simpson quadrature of `f` on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = simpson(a, b, fa, fm, fb);
    adaptive(f, a, b, fa, fm, fb, whole, tol, 50)
}

impl HFunction {
    pub fn new(phi: PhiFamily) -> Result<Self, DiagError> {
        match phi {
            PhiFamily::Linear { .. } => Err(DiagError::LinearPhi),
            PhiFamily::Superlinear { c0, beta } if c0 > 0.0 && beta > 0.0 => Ok(Self { phi, tolerance: 1e-13 }),
            _ => Err(DiagError::Invalid("superlinear Phi needs c0 > 0 and beta > 0".into())),
        }
    }

    pub fn h(&self, r: f64) -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let phi = self.phi;
        let f = move |s: f64| 1.0 / phi_eval(&phi, s);
        // unit-length panels keep the recursion shallow for large r
        let mut total = 0.0;
        let mut a = 0.0;
        while a < r {
            let b = (a + 1.0).min(r);
            total += adaptive_simpson(&f, a, b, self.tolerance);
            a = b;
        }
        total
    }

    /// Inverse by bisection; `0` for `r <= 0`.
    pub fn inverse(&self, r: f64) -> Result<f64, DiagError> {
        if r <= 0.0 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while self.h(hi) < r {
            hi *= 2.0;
            if hi > 1e12 {
                return Err(DiagError::Invalid(format!(
                    "H^-1({r}) exceeds the bracket (H(inf) too small)"
                )));
            }
        }
        Ok(self.bisect(r, 0.0, hi))
    }

    fn bisect(&self, r: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.h(mid) < r {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

/// `k (1 + H^{-1}(H(V0) - t/k)) e^{-lambda t}` at each time.
pub fn h_envelope(phi: &PhiFamily, v0: f64, k: f64, lambda: f64, times: &[f64]) -> Result<Vec<f64>, DiagError> {
    let h = HFunction::new(*phi)?;
    if !(v0 >= 1.0 && k > 0.0 && lambda > 0.0) {
        return Err(DiagError::Invalid("need V0 >= 1, k > 0, lambda > 0".into()));
    }
    let hv0 = h.h(v0);
    times
        .iter()
        .map(|&t| {
            let inner = if t <= 0.0 {
                v0
            } else {
                let arg = hv0 - t / k;
                if arg <= 0.0 {
                    0.0
                } else {
                    h.bisect(arg, 0.0, v0)
                }
            };
            Ok(k * (1.0 + inner) * (-lambda * t).exp())
        })
        .collect()
}

/// Smallest `k` in `[1e-6, 1e8]` (to relative precision 1e-6) for which the
/// envelope with rate `lambda` dominates `data` at every time.
pub fn minimal_envelope_k(
    phi: &PhiFamily,
    v0: f64,
    lambda: f64,
    times: &[f64],
    data: &[f64],
) -> Result<f64, DiagError> {
    let dominates = |k: f64| -> Result<bool, DiagError> {
        let env = h_envelope(phi, v0, k, lambda, times)?;
        Ok(env.iter().zip(data).all(|(e, d)| e >= d))
    };
    let (mut lo, mut hi) = (1e-6, 1e8);
    if !dominates(hi)? {
        return Err(DiagError::Invalid("no k up to 1e8 dominates the data".into()));
    }
    if dominates(lo)? {
        return Ok(lo);
    }
    while hi / lo > 1.0 + 1e-6 {
        let mid = (lo * hi).sqrt();
        if dominates(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn phi() -> PhiFamily {
        PhiFamily::Superlinear { c0: 1.0, beta: 1.0 }
    }

    #[test]
    fn arctan_closed_form() {
        let h = HFunction::new(phi()).unwrap();
        assert!((h.h(1.0) - std::f64::consts::FRAC_PI_4).abs() < 1e-10);
        assert!((h.h(5.0) - 5f64.atan()).abs() < 1e-10);
    }

    #[test]
    fn inverse_roundtrip() {
        let h = HFunction::new(phi()).unwrap();
        for r in [0.1, 1.0, 5.0, 30.0] {
            assert!((h.inverse(h.h(r)).unwrap() - r).abs() < 1e-8);
        }
        assert_eq!(h.inverse(-1.0).unwrap(), 0.0);
    }

    #[test]
    fn linear_phi_rejected() {
        assert_eq!(HFunction::new(PhiFamily::Linear { c0: 1.0 }), Err(DiagError::LinearPhi));
        assert!(h_envelope(&PhiFamily::Linear { c0: 1.0 }, 2.0, 1.0, 1.0, &[0.0]).is_err());
    }

    #[test]
    fn envelope_shape() {
        let (v0, k, lambda) = (5.0, 2.0, 0.3);
        let hv0 = 5f64.atan();
        let times: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let env = h_envelope(&phi(), v0, k, lambda, &times).unwrap();
        assert_eq!(env[0], k * (1.0 + v0));
        assert!(env.windows(2).all(|w| w[1] <= w[0]));
        for (t, e) in times.iter().zip(&env) {
            if *t >= k * hv0 {
                assert_eq!(*e, k * (-lambda * t).exp());
            }
        }
    }

    #[test]
    fn minimal_k_dominates() {
        let times: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let data: Vec<f64> = times.iter().map(|t| 3.0 * (-0.5 * t).exp()).collect();
        let k = minimal_envelope_k(&phi(), 4.0, 0.5, &times, &data).unwrap();
        let env = h_envelope(&phi(), 4.0, k, 0.5, &times).unwrap();
        assert!(env.iter().zip(&data).all(|(e, d)| e >= d));
        let smaller = h_envelope(&phi(), 4.0, k * 0.99, 0.5, &times).unwrap();
        assert!(smaller.iter().zip(&data).any(|(e, d)| e < d));
    }
}
