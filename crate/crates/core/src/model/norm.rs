use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AdmissiblePair, ModelError};

/// Quadrature resolution for [`localized_lpq_norm`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormGrid {
    /// Midpoint cells per axis on the cube `[y - 1, y + 1]^d` enclosing the ball.
    pub ball_cells: usize,
    /// Midpoint nodes on `[0, T]`.
    pub time_points: usize,
}

/// Centers over which the outer supremum is sampled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterSet {
    pub centers: Vec<Vec<f64>>,
}

impl CenterSet {
    /// Regular lattice with `per_axis` points per axis over `[min, max]`
    /// (a single point per axis sits at the midpoint).
    pub fn lattice(min: &[f64], max: &[f64], per_axis: usize) -> Self {
        let dim = min.len();
        let coord = |a: usize, k: usize| {
            if per_axis <= 1 {
                0.5 * (min[a] + max[a])
            } else {
                min[a] + (max[a] - min[a]) * k as f64 / (per_axis - 1) as f64
            }
        };
        let total = per_axis.max(1).pow(dim as u32);
        let centers = (0..total)
            .map(|mut idx| {
                let mut c = vec![0.0; dim];
                for a in (0..dim).rev() {
                    c[a] = coord(a, idx % per_axis.max(1));
                    idx /= per_axis.max(1);
                }
                c
            })
            .collect();
        Self { centers }
    }

    /// Adds declared singular atoms of the field as extra centers.
    pub fn with_atoms(mut self, atoms: impl IntoIterator<Item = Vec<f64>>) -> Self {
        self.centers.extend(atoms);
        self
    }
}

/// Value of the localized norm and the center attaining the sampled supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpqNorm {
    pub value: f64,
    pub center: Vec<f64>,
}

/// `int_{B_1(center)} |f|^p dy` by the midpoint rule on the product grid of the
/// enclosing cube, keeping cells whose midpoint lies in the closed unit ball.
pub fn ball_lp_integral(f: &dyn Fn(&[f64]) -> f64, center: &[f64], p: f64, cells: usize) -> f64 {
    let dim = center.len();
    let width = 2.0 / cells as f64;
    let cell_volume = width.powi(dim as i32);
    let total = cells.pow(dim as u32);
    let mut point = vec![0.0; dim];
    let mut sum = 0.0;
    let mut comp = 0.0;
    for mut idx in 0..total {
        let mut r2 = 0.0;
        for a in (0..dim).rev() {
            let k = idx % cells;
            idx /= cells;
            let offset = -1.0 + (k as f64 + 0.5) * width;
            r2 += offset * offset;
            point[a] = center[a] + offset;
        }
        if r2 > 1.0 {
            continue;
        }
        let v = f(&point).abs().powf(p) * cell_volume;
        // Kahan summation keeps the result independent of the cell count's rounding drift.
        let yk = v - comp;
        let tk = sum + yk;
        comp = (tk - sum) - yk;
        sum = tk;
    }
    sum
}

/// `sup_y (int_0^T |1_{B_1(y)} f_t|_{L^p}^q dt)^{1/q}` over the sampled centers.
///
/// `f(t, y)` returns the Euclidean magnitude `|f_t(y)|`. Singular fields must
/// carry their own floor; a non-finite result is reported as divergence.
pub fn localized_lpq_norm(
    f: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    pair: &AdmissiblePair,
    horizon: f64,
    grid: &NormGrid,
    centers: &CenterSet,
) -> Result<LpqNorm, ModelError> {
    let (p, q) = (pair.p(), pair.q());
    lpq_norm_with_exponents(f, p, q, horizon, grid, centers)
}

/// As [`localized_lpq_norm`] with unchecked exponents `p, q >= 1`.
pub fn lpq_norm_with_exponents(
    f: &(dyn Fn(f64, &[f64]) -> f64 + Sync),
    p: f64,
    q: f64,
    horizon: f64,
    grid: &NormGrid,
    centers: &CenterSet,
) -> Result<LpqNorm, ModelError> {
    if centers.centers.is_empty() {
        return Err(ModelError::Invalid("no centers to sample".into()));
    }
    let dt = horizon / grid.time_points as f64;
    let values: Vec<f64> = centers
        .centers
        .par_iter()
        .map(|c| {
            let mut acc = 0.0;
            for j in 0..grid.time_points {
                let t = (j as f64 + 0.5) * dt;
                let inner = ball_lp_integral(&|y| f(t, y), c, p, grid.ball_cells);
                acc += dt * inner.powf(q / p);
            }
            acc.powf(1.0 / q)
        })
        .collect();
    let mut best = 0usize;
    for (i, v) in values.iter().enumerate() {
        if !v.is_finite() {
            return Err(ModelError::NormDiverged {
                center: centers.centers[i].clone(),
            });
        }
        if *v > values[best] {
            best = i;
        }
    }
    Ok(LpqNorm {
        value: values[best],
        center: centers.centers[best].clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> NormGrid {
        NormGrid {
            ball_cells: 200,
            time_points: 4,
        }
    }

    #[test]
    fn constant_field_closed_form() {
        let pair = AdmissiblePair::new(4.0, 4.0, 1).unwrap();
        let centers = CenterSet::lattice(&[-2.0], &[2.0], 5);
        let n = localized_lpq_norm(&|_, _| 1.0, &pair, 1.0, &grid(), &centers).unwrap();
        assert!((n.value - 2f64.powf(0.25)).abs() < 1e-12);
    }

    #[test]
    fn zero_field() {
        let pair = AdmissiblePair::new(4.0, 4.0, 1).unwrap();
        let centers = CenterSet::lattice(&[-2.0], &[2.0], 3);
        let n = localized_lpq_norm(&|_, _| 0.0, &pair, 1.0, &grid(), &centers).unwrap();
        assert_eq!(n.value, 0.0);
    }

    #[test]
    fn singular_p1_analog() {
        // int_{-1}^{1} |y|^{-1/2} dy = 4; the midpoint error decays like sqrt(cell width)
        let f = |y: &[f64]| y[0].abs().powf(-0.5);
        let coarse = (ball_lp_integral(&f, &[0.0], 1.0, 1_000) - 4.0).abs();
        let fine = (ball_lp_integral(&f, &[0.0], 1.0, 100_000) - 4.0).abs();
        assert!(fine < 0.01, "fine error {fine}");
        assert!(fine < coarse / 5.0);
    }

    #[test]
    fn two_dimensional_ball_area() {
        let area = ball_lp_integral(&|_| 1.0, &[0.3, -0.2], 1.0, 400);
        assert!((area - std::f64::consts::PI).abs() < 1e-2);
    }

    #[test]
    fn divergence_reported() {
        let pair = AdmissiblePair::new(4.0, 4.0, 1).unwrap();
        let centers = CenterSet::lattice(&[0.0], &[0.0], 1);
        let err = localized_lpq_norm(&|_, _| f64::INFINITY, &pair, 1.0, &grid(), &centers).unwrap_err();
        assert!(matches!(err, ModelError::NormDiverged { .. }));
    }
}
