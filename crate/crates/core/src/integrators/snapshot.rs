//! Binary columnar ensemble snapshots: little-endian `f64` blocks (x, then y,
//! then weights) and a JSON sidecar.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Ensemble;

/// Sidecar metadata written next to the binary file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    pub config_hash: String,
    pub seed: u64,
    pub time: f64,
    pub particles: usize,
    pub d1: usize,
    pub d2: usize,
    pub dead: usize,
}

/// Decoded snapshot. Dead particles carry weight 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub meta: SnapshotMeta,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub weights: Vec<f64>,
}

fn sidecar_path(bin: &Path) -> PathBuf {
    bin.with_extension("json")
}

/// Writes the terminal states of `ensemble` to `path` and `path.json`.
pub fn write_snapshot(path: &Path, ensemble: &Ensemble, config_hash: &str) -> io::Result<PathBuf> {
    let weights: Vec<f64> = ensemble.alive.iter().map(|a| if *a { 1.0 } else { 0.0 }).collect();
    let mut bytes = Vec::with_capacity(8 * (ensemble.x.len() + ensemble.y.len() + weights.len()));
    for v in ensemble.x.iter().chain(&ensemble.y).chain(&weights) {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    let meta = SnapshotMeta {
        config_hash: config_hash.to_string(),
        seed: ensemble.config.seed,
        time: ensemble.config.horizon,
        particles: ensemble.len(),
        d1: ensemble.config.dims.d1,
        d2: ensemble.config.dims.d2,
        dead: ensemble.dead_count(),
    };
    let side = sidecar_path(path);
    fs::write(
        &side,
        serde_json::to_string_pretty(&meta).map_err(io::Error::other)? + "\n",
    )?;
    Ok(side)
}

pub fn read_snapshot(path: &Path) -> io::Result<Snapshot> {
    let meta: SnapshotMeta =
        serde_json::from_str(&fs::read_to_string(sidecar_path(path))?).map_err(io::Error::other)?;
    let bytes = fs::read(path)?;
    let n = meta.particles;
    let expected = 8 * n * (meta.d1 + meta.d2 + 1);
    if bytes.len() != expected {
        return Err(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("snapshot has {} bytes, expected {expected}", bytes.len()),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (x, rest) = values.split_at(n * meta.d1);
    let (y, w) = rest.split_at(n * meta.d2);
    Ok(Snapshot {
        meta,
        x: x.to_vec(),
        y: y.to_vec(),
        weights: w.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrators::{simulate_ensemble, InitialLaw, SimOptions};
    use crate::model::{Dims, PhaseState, SimConfig};

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SimConfig::new(0.5, 0.1, 7, 4, Dims::kinetic(1));
        let c = crate::fields::basic::linear_langevin(1, 1.0);
        let e = simulate_ensemble(
            &cfg,
            &c,
            &InitialLaw::Dirac(PhaseState::origin(1, 1)),
            None,
            SimOptions::default(),
        )
        .unwrap();
        let path = dir.path().join("snap.bin");
        write_snapshot(&path, &e, "abc").unwrap();
        let s = read_snapshot(&path).unwrap();
        assert_eq!(s.x, e.x);
        assert_eq!(s.y, e.y);
        assert_eq!(s.weights, vec![1.0; 7]);
        assert_eq!(s.meta.config_hash, "abc");
        assert_eq!(s.meta.time, 0.5);
    }
}
