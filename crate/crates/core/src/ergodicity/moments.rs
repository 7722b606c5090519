use serde::{Deserialize, Serialize};

use super::DiagError;
use crate::fields::LyapunovV;
use crate::integrators::Ensemble;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentVerdict {
    Bounded,
    Unbounded,
    /// Initial values of `V` span less than a factor 10.
    Inconclusive,
}

/// `E[sup_t V(X_t, Y_t)] / V(X_0, Y_0)` for particles sharing one start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentGroup {
    pub initial: Vec<f64>,
    pub v0: f64,
    pub ratio: f64,
    pub particles: usize,
    pub dead: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub groups: Vec<MomentGroup>,
    pub dead: usize,
    pub verdict: MomentVerdict,
}

/// Ratio spread tolerated for a bounded verdict.
pub const RATIO_BAND: f64 = 2.0;
/// Minimal spread of initial `V` values for a verdict.
pub const MIN_V0_SPREAD: f64 = 10.0;

/// Groups particles by their exact initial state and compares the running
/// maximum of `V` with its initial value. Dead particles are excluded from
/// the ratios, counted, and force an unbounded verdict.
pub fn moment_bound_check(ensemble: &Ensemble, v: &LyapunovV) -> Result<MomentReport, DiagError> {
    let paths = ensemble.paths.as_ref().ok_or(DiagError::MissingPaths)?;
    let mut groups: Vec<(Vec<f64>, Vec<f64>, usize)> = Vec::new();
    for (i, p) in paths.iter().enumerate() {
        let start = p.state(0).to_vec();
        let idx = match groups.iter().position(|g| g.0 == start) {
            Some(j) => j,
            None => {
                groups.push((start, Vec::new(), 0));
                groups.len() - 1
            }
        };
        if !ensemble.alive[i] {
            groups[idx].2 += 1;
            continue;
        }
        let sup = (0..p.len()).map(|k| v.value_at(p.state(k))).fold(f64::MIN, f64::max);
        groups[idx].1.push(sup);
    }
    let groups: Vec<MomentGroup> = groups
        .into_iter()
        .map(|(initial, sups, dead)| {
            let v0 = v.value_at(&initial);
            let ratio = if sups.is_empty() {
                f64::INFINITY
            } else {
                crate::stats::mean(&sups) / v0
            };
            MomentGroup {
                initial,
                v0,
                ratio,
                particles: sups.len() + dead,
                dead,
            }
        })
        .collect();
    let dead: usize = groups.iter().map(|g| g.dead).sum();
    let v0_min = groups.iter().map(|g| g.v0).fold(f64::INFINITY, f64::min);
    let v0_max = groups.iter().map(|g| g.v0).fold(0.0, f64::max);
    let r_min = groups.iter().map(|g| g.ratio).fold(f64::INFINITY, f64::min);
    let r_max = groups.iter().map(|g| g.ratio).fold(0.0, f64::max);
    let verdict = if dead > 0 || !(r_max <= RATIO_BAND * r_min) {
        MomentVerdict::Unbounded
    } else if v0_max < MIN_V0_SPREAD * v0_min {
        MomentVerdict::Inconclusive
    } else {
        MomentVerdict::Bounded
    };
    Ok(MomentReport { groups, dead, verdict })
}
