//! Numeric certification of the Lyapunov drift condition
//!
//! ```text
//! eps sup_{y' in B_eps(y)} { |Z1| |d_x d_y V(x, y')| + |Z2| (|d_y V(x, y')| + |d_yy V(x, y')|) }
//!     + <Z1, d_x V> + <Z2, d_y V>  <=  K - Phi(V(x, y))
//! ```
//!
//! on a sampled domain. Matrix norms are operator norms; `Z1, Z2` are
//! evaluated at `(x, y)` itself and only the derivative factors see the
//! shell supremum. Measure-dependent drifts are evaluated at the Dirac mass
//! at the origin. A check on a compact sample is evidence, not proof.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fields::{phi_eval, LyapunovV, PhiFamily};
use crate::model::CoefficientSet;
use crate::rng::{derive_seed, fill_normals, salt, stream_rng};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifierError {
    #[error("condition not certifiable on this domain")]
    NotCertifiable,
    #[error("invalid input: {0}")]
    Invalid(String),
}

/// Sampling domain: log-spaced radii times unit directions, plus the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub min_radius: f64,
    pub max_radius: f64,
    pub radii: usize,
    pub directions: usize,
    /// Points per shell `B_eps(y)` (excluding its center).
    pub shell_points: usize,
    pub seed: u64,
}

impl SampleSpec {
    pub fn new(max_radius: f64, radii: usize, directions: usize) -> Self {
        Self {
            min_radius: 0.05,
            max_radius,
            radii,
            directions,
            shell_points: 32,
            seed: 0,
        }
    }

    /// Twice as many radii and directions over the same domain.
    pub fn doubled(&self) -> Self {
        Self {
            radii: 2 * self.radii,
            directions: 2 * self.directions,
            ..self.clone()
        }
    }

    pub fn radius_values(&self) -> Vec<f64> {
        let n = self.radii.max(2);
        let ratio = self.max_radius / self.min_radius;
        (0..n)
            .map(|j| self.min_radius * ratio.powf(j as f64 / (n - 1) as f64))
            .collect()
    }

    /// Coordinate axes plus `directions` further unit directions in `R^dim`.
    pub fn direction_values(&self, dim: usize) -> Vec<Vec<f64>> {
        unit_directions(dim, self.directions, self.seed)
    }

    /// Concatenated `[x, y]` sample points.
    pub fn points(&self, dim: usize) -> Vec<Vec<f64>> {
        let mut pts = vec![vec![0.0; dim]];
        let dirs = self.direction_values(dim);
        for r in self.radius_values() {
            for u in &dirs {
                pts.push(u.iter().map(|c| r * c).collect());
            }
        }
        pts
    }

    pub fn describe(&self) -> String {
        format!(
            "log-radial radii in [{}, {}] ({} radii x {} directions plus coordinate axes, plus origin)",
            self.min_radius, self.max_radius, self.radii, self.directions
        )
    }
}

/// The coordinate axes `+-e_i` followed by `n` further unit directions:
/// half-step offset angles in the plane, seeded Gaussian directions above.
/// The axes carry the directions in which a kinetic drift loses dissipation.
fn unit_directions(dim: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    if dim == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    let mut out = Vec::with_capacity(2 * dim + n);
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[i] = s;
            out.push(e);
        }
    }
    if dim == 2 {
        let offset = 0.5 * std::f64::consts::TAU / (2.0 * n as f64);
        out.extend((0..n).map(|k| {
            let a = offset + std::f64::consts::TAU * k as f64 / n as f64;
            vec![a.cos(), a.sin()]
        }));
        return out;
    }
    let mut rng = stream_rng(derive_seed(seed, salt::DIRECTIONS), dim as u64);
    out.extend((0..n).map(|_| loop {
        let mut v = vec![0.0; dim];
        fill_normals(&mut rng, &mut v);
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-12 {
            break v.into_iter().map(|a| a / norm).collect();
        }
    }));
    out
}

/// Offsets `y' - y` sampling the closed ball of radius `eps` in `R^d2`
/// (center included).
pub fn shell_offsets(d2: usize, eps: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; d2]];
    if d2 == 1 {
        let m = count.max(2);
        for j in 0..m {
            out.push(vec![-eps + 2.0 * eps * j as f64 / (m - 1) as f64]);
        }
        return out;
    }
    let dirs = unit_directions(d2, count.div_ceil(3).max(1), seed);
    for r in [0.5 * eps, 0.75 * eps, eps] {
        for u in &dirs {
            out.push(u.iter().map(|c| r * c).collect());
        }
    }
    out
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Left-hand side of the drift condition at one point.
pub fn drift_lhs(coeffs: &CoefficientSet, v: &LyapunovV, eps: f64, offsets: &[Vec<f64>], x: &[f64], y: &[f64]) -> f64 {
    let dims = coeffs.dims();
    let mut z1 = vec![0.0; dims.d1];
    let mut z2 = vec![0.0; dims.d2];
    let mut scratch = vec![0.0; dims.d2];
    coeffs.eval_z1(0.0, x, y, &mut z1);
    coeffs.eval_z2(0.0, x, y, None, &mut z2, &mut scratch);
    let (n1, n2) = (norm(&z1), norm(&z2));
    let mut shell = f64::NEG_INFINITY;
    let mut yp = vec![0.0; dims.d2];
    for off in offsets {
        for (k, o) in off.iter().enumerate() {
            yp[k] = y[k] + o;
        }
        let term = n1 * v.hess_xy_norm(x, &yp) + n2 * (v.grad_y_norm(x, &yp) + v.hess_yy_norm(x, &yp));
        shell = shell.max(term);
    }
    let e = v.eval(x, y);
    eps * shell + dot(&z1, &e.grad_x) + dot(&z2, &e.grad_y)
}

/// Outcome at one sampled point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCheck {
    pub point: Vec<f64>,
    pub lhs: f64,
    /// `K - Phi(V)`.
    pub rhs: f64,
    /// `K - (lhs + Phi(V))`; nonnegative where the condition holds.
    pub margin: f64,
    /// Evaluation produced a non-finite value.
    pub flagged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Holds,
    Fails,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftConditionReport {
    pub domain: String,
    pub k: f64,
    pub phi: PhiFamily,
    pub eps: f64,
    pub points: Vec<PointCheck>,
    pub min_margin: f64,
    pub mean_margin: f64,
    pub worst_point: Vec<f64>,
    pub flagged: usize,
    pub verdict: Verdict,
}

impl DriftConditionReport {
    /// CSV of per-point margins: concatenated coordinates, lhs, rhs, margin.
    pub fn margins_csv(&self) -> String {
        let dim = self.points.first().map_or(0, |p| p.point.len());
        let mut s = String::new();
        let coords: Vec<String> = (0..dim).map(|i| format!("z{i}")).collect();
        let _ = writeln!(s, "{},lhs,rhs,margin", coords.join(","));
        for p in &self.points {
            let c: Vec<String> = p.point.iter().map(|v| format!("{v:?}")).collect();
            let _ = writeln!(s, "{},{:?},{:?},{:?}", c.join(","), p.lhs, p.rhs, p.margin);
        }
        s
    }

    /// One-line summary naming the sampled domain.
    pub fn statement(&self) -> String {
        match self.verdict {
            Verdict::Holds => format!("certified on domain D = {}", self.domain),
            Verdict::Fails => format!("fails on domain D = {}", self.domain),
        }
    }
}

struct Sampled {
    points: Vec<Vec<f64>>,
    lhs: Vec<f64>,
    values: Vec<f64>,
    radii: Vec<f64>,
}

fn sample(coeffs: &CoefficientSet, v: &LyapunovV, eps: f64, spec: &SampleSpec) -> Result<Sampled, VerifierError> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(VerifierError::Invalid(format!("eps must lie in (0, 1), got {eps}")));
    }
    let dims = coeffs.dims();
    if v.d1() != dims.d1 || v.d2() != dims.d2 {
        return Err(VerifierError::Invalid(
            "Lyapunov function dimensions differ from the coefficients".into(),
        ));
    }
    let points = spec.points(dims.phase());
    let offsets = shell_offsets(dims.d2, eps, spec.shell_points, spec.seed);
    let lhs: Vec<f64> = points
        .par_iter()
        .map(|p| drift_lhs(coeffs, v, eps, &offsets, &p[..dims.d1], &p[dims.d1..]))
        .collect();
    let values = points.iter().map(|p| v.value_at(p)).collect();
    let radii = points.iter().map(|p| norm(p)).collect();
    Ok(Sampled {
        points,
        lhs,
        values,
        radii,
    })
}

fn report(s: &Sampled, phi: &PhiFamily, k: f64, eps: f64, spec: &SampleSpec) -> DriftConditionReport {
    let points: Vec<PointCheck> = s
        .points
        .iter()
        .zip(&s.lhs)
        .zip(&s.values)
        .map(|((p, &lhs), &val)| {
            let ph = phi_eval(phi, val);
            let margin = k - (lhs + ph);
            PointCheck {
                point: p.clone(),
                lhs,
                rhs: k - ph,
                margin,
                flagged: !margin.is_finite(),
            }
        })
        .collect();
    let flagged = points.iter().filter(|p| p.flagged).count();
    let mut worst = 0;
    for (i, p) in points.iter().enumerate() {
        if p.flagged || p.margin < points[worst].margin {
            worst = i;
            if p.flagged {
                break;
            }
        }
    }
    let min_margin = if flagged > 0 { f64::NAN } else { points[worst].margin };
    let mean_margin = crate::stats::mean(&points.iter().map(|p| p.margin).collect::<Vec<_>>());
    let holds = flagged == 0 && points.iter().all(|p| p.margin >= 0.0);
    DriftConditionReport {
        domain: spec.describe(),
        k,
        phi: *phi,
        eps,
        worst_point: points[worst].point.clone(),
        points,
        min_margin,
        mean_margin,
        flagged,
        verdict: if holds { Verdict::Holds } else { Verdict::Fails },
    }
}

/// Checks the drift condition with fixed `(Phi, K)` at every sampled point.
pub fn check_drift_condition(
    coeffs: &CoefficientSet,
    v: &LyapunovV,
    phi: &PhiFamily,
    k: f64,
    eps: f64,
    spec: &SampleSpec,
) -> Result<DriftConditionReport, VerifierError> {
    let s = sample(coeffs, v, eps, spec)?;
    Ok(report(&s, phi, k, eps, spec))
}

/// Feasibility rule for the constant search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TailPolicy {
    /// `K` must be attained on the inner half of the radial range: the drift
    /// has to dominate `Phi(V)` in the tail of the sampled domain, which is
    /// what makes the condition meaningful beyond the compact sample.
    Dissipative,
    /// Any finite `K` is accepted; `c0` is capped by the search bound.
    Compact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantSearch {
    pub c0: f64,
    pub k: f64,
    pub policy: TailPolicy,
    pub report: DriftConditionReport,
}

/// Lower end of the `c0` search range.
pub const MIN_C0: f64 = 1e-6;

/// Largest `c0 <= c0_max` for which the jointly minimal
/// `K(c0) = max (lhs + Phi_{c0}(V))` is feasible under `policy`, by bisection.
pub fn search_constants(
    coeffs: &CoefficientSet,
    v: &LyapunovV,
    phi_kind: &PhiFamily,
    eps: f64,
    spec: &SampleSpec,
    policy: TailPolicy,
    c0_max: f64,
) -> Result<ConstantSearch, VerifierError> {
    let s = sample(coeffs, v, eps, spec)?;
    if s.lhs.iter().any(|l| !l.is_finite()) {
        return Err(VerifierError::Invalid(
            "non-finite drift evaluation on the sample".into(),
        ));
    }
    let half = 0.5 * spec.max_radius;
    let k_of = |c0: f64| -> (f64, f64, f64) {
        let phi = phi_kind.with_c0(c0);
        let mut inner = f64::NEG_INFINITY;
        let mut outer = f64::NEG_INFINITY;
        for i in 0..s.points.len() {
            let total = s.lhs[i] + phi_eval(&phi, s.values[i]);
            if s.radii[i] > half {
                outer = outer.max(total);
            } else {
                inner = inner.max(total);
            }
        }
        (inner.max(outer), inner, outer)
    };
    let feasible = |c0: f64| -> bool {
        let (k, inner, outer) = k_of(c0);
        k.is_finite()
            && match policy {
                TailPolicy::Compact => true,
                TailPolicy::Dissipative => outer <= inner,
            }
    };
    if !feasible(MIN_C0) {
        return Err(VerifierError::NotCertifiable);
    }
    let c0 = if feasible(c0_max) {
        c0_max
    } else {
        let (mut lo, mut hi) = (MIN_C0, c0_max);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let k = k_of(c0).0;
    let phi = phi_kind.with_c0(c0);
    Ok(ConstantSearch {
        c0,
        k,
        policy,
        report: report(&s, &phi, k, eps, spec),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub radii: Vec<f64>,
    pub shell_max: Vec<f64>,
    pub vanishing: bool,
}

/// Shell maxima of `sup_{y' in B_eps(y)} (|d_y V| + |d_yy V|)(x, y') / min(V, Phi(V))`
/// over spheres of the given radii. The trend is vanishing when the maxima
/// decrease strictly over the upper half of the radii.
pub fn check_growth_ratios(
    v: &LyapunovV,
    phi: &PhiFamily,
    eps: f64,
    radii: &[f64],
    directions: usize,
    seed: u64,
) -> Result<GrowthReport, VerifierError> {
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return Err(VerifierError::Invalid("radii must increase".into()));
    }
    let (d1, d2) = (v.d1(), v.d2());
    let dirs = unit_directions(d1 + d2, directions, seed);
    let offsets = shell_offsets(d2, eps, 32, seed);
    let shell_max: Vec<f64> = radii
        .iter()
        .map(|&r| {
            let mut best = 0.0f64;
            for u in &dirs {
                let p: Vec<f64> = u.iter().map(|c| r * c).collect();
                let (x, y) = p.split_at(d1);
                let val = v.value(x, y);
                let denom = val.min(phi_eval(phi, val));
                let mut yp = y.to_vec();
                let mut sup = 0.0f64;
                for off in &offsets {
                    for k in 0..d2 {
                        yp[k] = y[k] + off[k];
                    }
                    sup = sup.max(v.grad_y_norm(x, &yp) + v.hess_yy_norm(x, &yp));
                }
                best = best.max(sup / denom);
            }
            best
        })
        .collect();
    let start = radii.len() / 2;
    let vanishing = radii.len() >= 2 && shell_max[start..].windows(2).all(|w| w[1] < w[0]);
    Ok(GrowthReport {
        radii: radii.to_vec(),
        shell_max,
        vanishing,
    })
}
