use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{is_admissible, CoefficientSet, Dims, Growth, ModelError};

/// Time-stepping scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Tamed,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Tamed => "tamed",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "tamed" => Ok(Scheme::Tamed),
            other => Err(format!("unknown scheme {other:?} (expected euler or tamed)")),
        }
    }
}

/// Product-grid histogram over a box in phase space. Bins are half-open
/// `[lo, hi)` per axis; points outside the box count as out-of-box mass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub bins: Vec<usize>,
}

impl HistogramSpec {
    pub fn uniform(dim: usize, min: f64, max: f64, bins: usize) -> Self {
        Self {
            min: vec![min; dim],
            max: vec![max; dim],
            bins: vec![bins; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.bins.len()
    }

    pub fn total_bins(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn violations(&self, dim: usize) -> Vec<String> {
        let mut out = Vec::new();
        if self.min.len() != dim || self.max.len() != dim || self.bins.len() != dim {
            out.push(format!(
                "histogram axes ({}, {}, {}) do not match phase dimension {dim}",
                self.min.len(),
                self.max.len(),
                self.bins.len()
            ));
            return out;
        }
        for a in 0..dim {
            if !(self.min[a].is_finite() && self.max[a].is_finite() && self.min[a] < self.max[a]) {
                out.push(format!("histogram axis {a}: need finite min < max"));
            }
            if self.bins[a] < 2 {
                out.push(format!("histogram axis {a}: fewer than 2 bins"));
            }
        }
        out
    }

    /// Flat bin index of `point`, or `None` when it lies outside the box.
    pub fn cell_index(&self, point: &[f64]) -> Option<usize> {
        let mut index = 0usize;
        for (a, &v) in point.iter().enumerate().take(self.bins.len()) {
            if !(v >= self.min[a] && v < self.max[a]) {
                return None;
            }
            let width = (self.max[a] - self.min[a]) / self.bins[a] as f64;
            let k = (((v - self.min[a]) / width) as usize).min(self.bins[a] - 1);
            index = index * self.bins[a] + k;
        }
        Some(index)
    }

    /// Center of the bin with flat index `index`.
    pub fn center(&self, mut index: usize) -> Vec<f64> {
        let dim = self.bins.len();
        let mut c = vec![0.0; dim];
        for a in (0..dim).rev() {
            let k = index % self.bins[a];
            index /= self.bins[a];
            let width = (self.max[a] - self.min[a]) / self.bins[a] as f64;
            c[a] = self.min[a] + (k as f64 + 0.5) * width;
        }
        c
    }

    /// All `2^dim` corners of the box.
    pub fn corners(&self) -> Vec<Vec<f64>> {
        let dim = self.bins.len();
        (0..1usize << dim)
            .map(|mask| {
                (0..dim)
                    .map(|a| if mask >> a & 1 == 1 { self.max[a] } else { self.min[a] })
                    .collect()
            })
            .collect()
    }
}

/// Core simulation parameters shared by every experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    pub step: f64,
    pub particles: usize,
    pub seed: u64,
    pub dims: Dims,
    pub scheme: Scheme,
    pub histogram: HistogramSpec,
    /// Spacing of recorded time slices; `None` records every step.
    pub record_every: Option<f64>,
    /// Optional integrability exponents `(p, q)` checked by [`validate_config`].
    pub integrability: Option<(f64, f64)>,
}

impl SimConfig {
    /// A config with the default histogram `[-4, 4)` and 20 bins per axis.
    pub fn new(horizon: f64, step: f64, particles: usize, seed: u64, dims: Dims) -> Self {
        Self {
            horizon,
            step,
            particles,
            seed,
            dims,
            scheme: Scheme::Euler,
            histogram: HistogramSpec::uniform(dims.phase(), -4.0, 4.0, 20),
            record_every: None,
            integrability: None,
        }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_histogram(mut self, histogram: HistogramSpec) -> Self {
        self.histogram = histogram;
        self
    }

    pub fn with_record_every(mut self, every: f64) -> Self {
        self.record_every = Some(every);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_particles(mut self, n: usize) -> Self {
        self.particles = n;
        self
    }

    /// Number of steps `K = T / h` (rounded).
    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    /// Grid time `t_k = k h`.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    /// Steps between recorded slices (at least 1).
    pub fn record_stride(&self) -> usize {
        match self.record_every {
            Some(every) => ((every / self.step).round() as usize).max(1),
            None => 1,
        }
    }

    /// Recorded step indices: multiples of the stride plus the final step.
    pub fn recorded_steps(&self) -> Vec<usize> {
        let k = self.steps();
        let stride = self.record_stride();
        let mut v: Vec<usize> = (0..=k).step_by(stride).collect();
        if *v.last().unwrap() != k {
            v.push(k);
        }
        v
    }

    /// Structural problems of the config alone.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.step > 0.0) || !self.step.is_finite() {
            out.push("nonpositive step".to_string());
        }
        if !(self.horizon >= self.step) || !self.horizon.is_finite() {
            out.push("horizon shorter than one step".to_string());
        }
        if self.step > 0.0 && self.horizon.is_finite() {
            let k = (self.horizon / self.step).round();
            if (k * self.step - self.horizon).abs() > 1e-9 * self.horizon.abs().max(self.step) {
                out.push(format!("T / h = {} is not an integer", self.horizon / self.step));
            }
        }
        if self.particles == 0 {
            out.push("particle count must be at least 1".to_string());
        }
        if self.dims.d1 == 0 || self.dims.d2 == 0 || self.dims.m == 0 {
            out.push("dimensions d1, d2, m must be positive".to_string());
        }
        if let Some(every) = self.record_every {
            if !(every > 0.0) {
                out.push("record.every must be positive".to_string());
            }
        }
        if let Some((p, q)) = self.integrability {
            if !is_admissible(p, q, self.dims.d2) {
                out.push(format!(
                    "(p, q) = ({p}, {q}) not admissible for d2 = {}: d2/p + 2/q = {}",
                    self.dims.d2,
                    self.dims.d2 as f64 / p + 2.0 / q
                ));
            }
        }
        out.extend(self.histogram.violations(self.dims.phase()));
        out
    }

    /// Reads the core keys from a parsed key-value file. Missing optional keys
    /// take defaults; `T`, `h` and `N` are required.
    pub fn from_kv(kv: &KvConfig) -> Result<Self, ModelError> {
        let horizon = kv.require_f64("T")?;
        let step = kv.require_f64("h")?;
        let particles = kv.require_usize("N")?;
        let seed = kv.get_u64("seed")?.unwrap_or(0);
        let d1 = kv.get_usize("d1")?.unwrap_or(1);
        let d2 = kv.get_usize("d2")?.unwrap_or(d1);
        let m = kv.get_usize("m")?.unwrap_or(d2);
        let dims = Dims::new(d1, d2, m);
        let scheme = match kv.get("scheme") {
            Some(e) => e
                .value
                .parse()
                .map_err(|message| ModelError::Config { line: e.line, message })?,
            None => Scheme::Euler,
        };
        let dim = dims.phase();
        let broadcast = |key: &str, default: f64| -> Result<Vec<f64>, ModelError> {
            match kv.get_f64_list(key)? {
                None => Ok(vec![default; dim]),
                Some(v) if v.len() == 1 => Ok(vec![v[0]; dim]),
                Some(v) => Ok(v),
            }
        };
        let min = broadcast("hist.min", -4.0)?;
        let max = broadcast("hist.max", 4.0)?;
        let bins = broadcast("hist.bins", 20.0)?
            .into_iter()
            .map(|b| if b >= 0.0 && b.fract() == 0.0 { b as usize } else { 0 })
            .collect();
        let integrability = match (kv.get_f64("lpq.p")?, kv.get_f64("lpq.q")?) {
            (Some(p), Some(q)) => Some((p, q)),
            (None, None) => None,
            _ => return Err(ModelError::Invalid("lpq.p and lpq.q must be given together".into())),
        };
        Ok(Self {
            horizon,
            step,
            particles,
            seed,
            dims,
            scheme,
            histogram: HistogramSpec { min, max, bins },
            record_every: kv.get_f64("record.every")?,
            integrability,
        })
    }

    /// Key-value text of the core keys, readable by [`SimConfig::from_kv`].
    pub fn to_kv_text(&self) -> String {
        let join_f = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(", ");
        let mut s = String::new();
        let _ = writeln!(s, "T = {}", fmt_f64(self.horizon));
        let _ = writeln!(s, "h = {}", fmt_f64(self.step));
        let _ = writeln!(s, "N = {}", self.particles);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "d1 = {}", self.dims.d1);
        let _ = writeln!(s, "d2 = {}", self.dims.d2);
        let _ = writeln!(s, "m = {}", self.dims.m);
        let _ = writeln!(s, "scheme = {}", self.scheme.as_str());
        let _ = writeln!(s, "hist.min = {}", join_f(&self.histogram.min));
        let _ = writeln!(s, "hist.max = {}", join_f(&self.histogram.max));
        let bins: Vec<String> = self.histogram.bins.iter().map(|b| b.to_string()).collect();
        let _ = writeln!(s, "hist.bins = {}", bins.join(", "));
        if let Some(every) = self.record_every {
            let _ = writeln!(s, "record.every = {}", fmt_f64(every));
        }
        if let Some((p, q)) = self.integrability {
            let _ = writeln!(s, "lpq.p = {}", fmt_f64(p));
            let _ = writeln!(s, "lpq.q = {}", fmt_f64(q));
        }
        s
    }
}

/// Shortest round-trip decimal form, always with a period separator.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

/// Result of [`validate_config`]: an empty list means valid.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Structural checks of a config against a coefficient set.
pub fn validate_config(cfg: &SimConfig, coeffs: &CoefficientSet) -> ValidationReport {
    let mut violations = cfg.violations();
    if cfg.dims != coeffs.dims() {
        violations.push(format!(
            "config dimensions {:?} differ from coefficient dimensions {:?}",
            cfg.dims,
            coeffs.dims()
        ));
    }
    if !coeffs.sigma_bounds().is_valid() {
        violations.push("sigma bounds must be finite and positive".to_string());
    }
    if coeffs.growth() == Growth::Superlinear && cfg.scheme != Scheme::Tamed {
        violations.push("superlinear drift requires the tamed scheme".to_string());
    }
    ValidationReport { violations }
}

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
pub struct KvEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

/// A flat key-value configuration file: `key = value` lines, `#` starts a
/// comment, blank lines are ignored, duplicate keys are rejected.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvConfig {
    entries: Vec<KvEntry>,
}

impl KvConfig {
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut entries: Vec<KvEntry> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((k, v)) = content.split_once('=') else {
                return Err(ModelError::Config {
                    line,
                    message: format!("expected `key = value`, got {content:?}"),
                });
            };
            let key = k.trim().to_string();
            if key.is_empty() {
                return Err(ModelError::Config {
                    line,
                    message: "empty key".into(),
                });
            }
            if let Some(prev) = entries.iter().find(|e| e.key == key) {
                return Err(ModelError::Config {
                    line,
                    message: format!("duplicate key {key:?} (first set on line {})", prev.line),
                });
            }
            entries.push(KvEntry {
                key,
                value: v.trim().to_string(),
                line,
            });
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[KvEntry] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&KvEntry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.get(key).is_some()
    }

    /// Sets or replaces a key (replacement keeps the original line number).
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        let value = value.into();
        if let Some(e) = self.entries.iter_mut().find(|e| e.key == key) {
            e.value = value;
        } else {
            let line = self.entries.last().map_or(0, |e| e.line) + 1;
            self.entries.push(KvEntry {
                key: key.to_string(),
                value,
                line,
            });
        }
    }

    /// Fails on the first key rejected by `known`, reporting its line.
    pub fn check_known(&self, known: impl Fn(&str) -> bool) -> Result<(), ModelError> {
        match self.entries.iter().find(|e| !known(&e.key)) {
            Some(e) => Err(ModelError::Config {
                line: e.line,
                message: format!("unknown key {:?} in `{} = {}`", e.key, e.key, e.value),
            }),
            None => Ok(()),
        }
    }

    /// Canonical form (keys sorted, one `key = value` per line) used for hashing.
    pub fn canonical_text(&self) -> String {
        let sorted: BTreeMap<&str, &str> = self
            .entries
            .iter()
            .map(|e| (e.key.as_str(), e.value.as_str()))
            .collect();
        let mut s = String::new();
        for (k, v) in sorted {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    fn parse_err(e: &KvEntry, what: &str) -> ModelError {
        ModelError::Config {
            line: e.line,
            message: format!("{}: expected {what}, got {:?}", e.key, e.value),
        }
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.get(key).map(|e| e.value.as_str())
    }

    pub fn get_f64(&self, key: &str) -> Result<Option<f64>, ModelError> {
        self.get(key)
            .map(|e| e.value.parse::<f64>().map_err(|_| Self::parse_err(e, "a number")))
            .transpose()
    }

    pub fn get_usize(&self, key: &str) -> Result<Option<usize>, ModelError> {
        self.get(key)
            .map(|e| e.value.parse::<usize>().map_err(|_| Self::parse_err(e, "a count")))
            .transpose()
    }

    pub fn get_u64(&self, key: &str) -> Result<Option<u64>, ModelError> {
        self.get(key)
            .map(|e| {
                e.value
                    .parse::<u64>()
                    .map_err(|_| Self::parse_err(e, "an unsigned integer"))
            })
            .transpose()
    }

    pub fn get_bool(&self, key: &str) -> Result<Option<bool>, ModelError> {
        self.get(key)
            .map(|e| match e.value.as_str() {
                "true" => Ok(true),
                "false" => Ok(false),
                _ => Err(Self::parse_err(e, "true or false")),
            })
            .transpose()
    }

    /// Comma-separated list of numbers (optionally bracketed).
    pub fn get_f64_list(&self, key: &str) -> Result<Option<Vec<f64>>, ModelError> {
        self.get(key)
            .map(|e| {
                let inner = e.value.trim().trim_start_matches('[').trim_end_matches(']');
                inner
                    .split(',')
                    .map(|s| {
                        s.trim()
                            .parse::<f64>()
                            .map_err(|_| Self::parse_err(e, "a comma-separated list of numbers"))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn require_f64(&self, key: &str) -> Result<f64, ModelError> {
        self.get_f64(key)?
            .ok_or_else(|| ModelError::Invalid(format!("missing required key {key:?}")))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize, ModelError> {
        self.get_usize(key)?
            .ok_or_else(|| ModelError::Invalid(format!("missing required key {key:?}")))
    }
}
