//! Reproducible output files: config hashes, CSV/JSON writers that embed the
//! hash, and experiment manifests checked by [`verify_manifest`].
//!
//! CSV files start with a `# config_hash=<hex>` comment line, use `.` as the
//! decimal separator and `\n` line endings. JSON files carry a top-level
//! `config_hash` field. Binary snapshots carry it in their JSON sidecar.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Version string recorded in manifests.
pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a configuration's canonical text.
pub fn config_hash(canonical_text: &str) -> String {
    sha256_hex(canonical_text.as_bytes())
}

/// Writes `header` and `rows` (already formatted) below the hash comment.
pub fn write_csv(path: &Path, hash: &str, header: &str, rows: &[String]) -> io::Result<()> {
    let mut s = format!("# config_hash={hash}\n{header}\n");
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    fs::write(path, s)
}

/// Writes a CSV body whose first line is its header.
pub fn write_csv_text(path: &Path, hash: &str, body: &str) -> io::Result<()> {
    let mut s = format!("# config_hash={hash}\n{body}");
    if !s.ends_with('\n') {
        s.push('\n');
    }
    fs::write(path, s)
}

/// `t,distance,noise_floor` series.
pub fn write_distance_csv(path: &Path, hash: &str, times: &[f64], distance: &[f64], floor: &[f64]) -> io::Result<()> {
    let rows: Vec<String> = (0..times.len())
        .map(|i| format!("{:?},{:?},{:?}", times[i], distance[i], floor[i]))
        .collect();
    write_csv(path, hash, "t,distance,noise_floor", &rows)
}

/// Serializes `value` as a JSON object with `config_hash` added.
pub fn write_json<T: Serialize>(path: &Path, hash: &str, value: &T) -> io::Result<()> {
    let mut v = serde_json::to_value(value).map_err(io::Error::other)?;
    match v.as_object_mut() {
        Some(obj) => {
            obj.insert("config_hash".into(), serde_json::Value::String(hash.to_string()));
        }
        None => {
            v = serde_json::json!({ "config_hash": hash, "value": v });
        }
    }
    fs::write(path, serde_json::to_string_pretty(&v).map_err(io::Error::other)? + "\n")
}

/// Embedded hash, header columns and numeric rows of a CSV file.
pub type CsvContents = (Option<String>, Vec<String>, Vec<Vec<f64>>);

/// Reads a CSV written by [`write_csv`]: returns the embedded hash, the
/// header columns and the numeric rows.
pub fn read_csv(path: &Path) -> io::Result<CsvContents> {
    let text = fs::read_to_string(path)?;
    let mut hash = None;
    let mut header = None;
    let mut rows = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            if let Some(h) = c.trim().strip_prefix("config_hash=") {
                hash = Some(h.to_string());
            }
            continue;
        }
        if header.is_none() {
            header = Some(line.split(',').map(|s| s.trim().to_string()).collect());
            continue;
        }
        let row = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("line {}: {e}", n + 1)))?;
        rows.push(row);
    }
    Ok((hash, header.unwrap_or_default(), rows))
}

/// The config hash embedded in an output file, by file kind.
pub fn embedded_hash(path: &Path) -> io::Result<Option<String>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => Ok(read_csv(path)?.0),
        Some("json") => {
            let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?).map_err(io::Error::other)?;
            Ok(v.get("config_hash").and_then(|h| h.as_str()).map(str::to_string))
        }
        _ => {
            let side = path.with_extension("json");
            if side.exists() {
                embedded_hash(&side)
            } else {
                Ok(None)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the manifest's directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub command: String,
    pub config: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub threads: usize,
    pub outputs: Vec<OutputFile>,
    pub wall_clock_seconds: f64,
    pub steps: u64,
}

impl ExperimentManifest {
    pub fn new(command: &str, config: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config: config.to_string(),
            config_hash: config_hash(config),
            seed,
            version: ARTIFACT_VERSION.to_string(),
            threads: 0,
            outputs: Vec::new(),
            wall_clock_seconds: 0.0,
            steps: 0,
        }
    }

    /// Records an output file located in `dir`.
    pub fn add_output(&mut self, dir: &Path, file: &Path) -> io::Result<()> {
        let bytes = fs::read(file)?;
        let rel = file.strip_prefix(dir).unwrap_or(file);
        self.outputs.push(OutputFile {
            path: rel.to_string_lossy().into_owned(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn write(&self, path: &Path) -> io::Result<()> {
        fs::write(
            path,
            serde_json::to_string_pretty(self).map_err(io::Error::other)? + "\n",
        )
    }

    pub fn read(path: &Path) -> io::Result<Self> {
        serde_json::from_str(&fs::read_to_string(path)?).map_err(io::Error::other)
    }
}

/// Problems found by [`verify_manifest`]; empty when everything matches.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checked: usize,
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn is_ok(&self) -> bool {
        self.problems.is_empty()
    }
}

/// Checks that the manifest's config text matches its hash and that every
/// listed output exists, embeds that hash and has the recorded digest.
pub fn verify_manifest(path: &Path) -> io::Result<VerifyReport> {
    let m = ExperimentManifest::read(path)?;
    let dir: PathBuf = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut report = VerifyReport::default();
    if config_hash(&m.config) != m.config_hash {
        report.problems.push("config text does not match config_hash".into());
    }
    for out in &m.outputs {
        report.checked += 1;
        let file = dir.join(&out.path);
        let bytes = match fs::read(&file) {
            Ok(b) => b,
            Err(e) => {
                report.problems.push(format!("{}: {e}", out.path));
                continue;
            }
        };
        if sha256_hex(&bytes) != out.sha256 {
            report.problems.push(format!("{}: content digest differs", out.path));
        }
        match embedded_hash(&file)? {
            Some(h) if h == m.config_hash => {}
            Some(h) => report
                .problems
                .push(format!("{}: config hash {h} differs from manifest", out.path)),
            None => report.problems.push(format!("{}: no embedded config hash", out.path)),
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn csv_roundtrip_and_verify() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = ExperimentManifest::new("test", "T = 1\n", 7);
        let csv = dir.path().join("d.csv");
        write_distance_csv(&csv, &m.config_hash, &[0.0, 1.0], &[2.0, 0.5], &[0.1, 0.1]).unwrap();
        let (h, header, rows) = read_csv(&csv).unwrap();
        assert_eq!(h.as_deref(), Some(m.config_hash.as_str()));
        assert_eq!(header, ["t", "distance", "noise_floor"]);
        assert_eq!(rows[1], [1.0, 0.5, 0.1]);
        let json = dir.path().join("s.json");
        write_json(&json, &m.config_hash, &serde_json::json!({"rate": 1.0})).unwrap();
        m.add_output(dir.path(), &csv).unwrap();
        m.add_output(dir.path(), &json).unwrap();
        let mp = dir.path().join("manifest.json");
        m.write(&mp).unwrap();
        assert!(verify_manifest(&mp).unwrap().is_ok());
        write_json(&json, "other", &serde_json::json!({"rate": 1.0})).unwrap();
        let r = verify_manifest(&mp).unwrap();
        assert_eq!(r.problems.len(), 2);
    }
}
