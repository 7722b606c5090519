//! Systems assembled from key-value configuration files.
//!
//! Besides the core simulation keys read by [`SimConfig::from_kv`], a file
//! selects a drift family, an optional singular drift, an optional
//! interaction and initial laws:
//!
//! ```text
//! system = damped               # zero | langevin | damped
//! damped.c1 = 1                 # damped: c1, c2, c3, delta, sine
//! damped.control = true         # skip the sign checks (negative controls)
//! riesz.weight = 0.5            # floored Riesz drift with one atom at 0
//! riesz.alpha = 0.5
//! kernel = tanh                 # none | tanh | constant | velocity
//! kappa = 0.2
//! init.x = 2                    # Dirac or Gaussian (init.std) initial law
//! init.y = 2
//! ```
//!
//! Subcommand-specific keys are listed in [`KNOWN_KEYS`].

use std::sync::Arc;

use thiserror::Error;

use crate::fields::basic::{linear_langevin, ScaledIdentity};
use crate::fields::{
    interaction_z2, ConstantKernel, DampedKinetic, FieldError, LyapunovV, Perturbation, PhiFamily, RieszDrift,
    TanhKernel, VelocityAttraction, DEFAULT_FLOOR,
};
use crate::integrators::InitialLaw;
use crate::model::{CoefficientSet, Dims, InteractionKernel, KvConfig, ModelError, PhaseState, SigmaBounds, SimConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PresetError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Every key accepted in configuration files.
pub const KNOWN_KEYS: &[&str] = &[
    // core
    "T",
    "h",
    "N",
    "seed",
    "d1",
    "d2",
    "m",
    "scheme",
    "hist.min",
    "hist.max",
    "hist.bins",
    "record.every",
    "lpq.p",
    "lpq.q",
    // system
    "system",
    "sigma",
    "langevin.gamma",
    "damped.c1",
    "damped.c2",
    "damped.c3",
    "damped.delta",
    "damped.sine",
    "damped.control",
    "riesz.weight",
    "riesz.alpha",
    "riesz.floor",
    "kernel",
    "kernel.coordinate",
    "kernel.value",
    "kappa",
    // initial laws
    "init.x",
    "init.y",
    "init.std",
    "init2.x",
    "init2.y",
    "init2.std",
    // diagnostics
    "resamples",
    "fit.start",
    "fit.end",
    // lyapunov-check
    "lyap.theta",
    "phi.kind",
    "phi.c0",
    "phi.beta",
    "lyap.eps",
    "lyap.radius",
    "lyap.radii",
    "lyap.directions",
    "lyap.k",
    "lyap.policy",
    "lyap.c0_max",
    // zvonkin
    "zv.target",
    "zv.half_width",
    "zv.points",
    // khasminskii
    "kh.f",
    "kh.a",
    "kh.alpha",
    "kh.floor",
    "kh.confidence",
    // mkv-picard, mkv-sweep
    "picard.lambda",
    "picard.crn",
    "picard.max_iter",
    "sweep.kappas",
    // h-bound
    "h.v0",
    "h.k",
    "h.lambda",
    "h.t_max",
    "h.points",
];

pub fn is_known_key(key: &str) -> bool {
    KNOWN_KEYS.contains(&key)
}

/// Parses a configuration, rejecting unknown keys with their line number.
pub fn parse_config(text: &str) -> Result<(KvConfig, SimConfig), PresetError> {
    let kv = KvConfig::parse(text)?;
    kv.check_known(is_known_key)?;
    let cfg = SimConfig::from_kv(&kv)?;
    Ok((kv, cfg))
}

fn f64_or(kv: &KvConfig, key: &str, default: f64) -> Result<f64, PresetError> {
    Ok(kv.get_f64(key)?.unwrap_or(default))
}

/// The singular drift selected by `riesz.*`, if any.
pub fn riesz_from_kv(kv: &KvConfig, d2: usize) -> Result<Option<RieszDrift>, PresetError> {
    match kv.get_f64("riesz.weight")? {
        None => Ok(None),
        Some(w) => Ok(Some(RieszDrift::single(
            d2,
            w,
            f64_or(kv, "riesz.alpha", 0.5)?,
            f64_or(kv, "riesz.floor", DEFAULT_FLOOR)?,
        )?)),
    }
}

/// Interaction kernel selected by `kernel`, if any.
pub fn kernel_from_kv(kv: &KvConfig, dims: Dims) -> Result<Option<Arc<dyn InteractionKernel>>, PresetError> {
    let kernel: Arc<dyn InteractionKernel> = match kv.get_str("kernel").unwrap_or("none") {
        "none" => return Ok(None),
        "tanh" => Arc::new(TanhKernel {
            coordinate: kv.get_usize("kernel.coordinate")?.unwrap_or(dims.d1),
            dim: dims.d2,
        }),
        "constant" => Arc::new(ConstantKernel {
            value: vec![f64_or(kv, "kernel.value", 1.0)?; dims.d2],
        }),
        "velocity" => Arc::new(VelocityAttraction { dim: dims.d2 }),
        other => return Err(PresetError::Invalid(format!("unknown kernel {other:?}"))),
    };
    Ok(Some(kernel))
}

/// Coefficients without the interaction.
pub fn base_coefficients(kv: &KvConfig, dims: Dims) -> Result<CoefficientSet, PresetError> {
    let kinetic = || -> Result<usize, PresetError> {
        if dims.d1 == dims.d2 && dims.d2 == dims.m {
            Ok(dims.d1)
        } else {
            Err(PresetError::Invalid("this system needs d1 = d2 = m".into()))
        }
    };
    let mut c = match kv.get_str("system").unwrap_or("zero") {
        "zero" => CoefficientSet::zero(dims),
        "langevin" => linear_langevin(kinetic()?, f64_or(kv, "langevin.gamma", 1.0)?),
        "damped" => {
            let (c1, c2, c3, delta) = (
                f64_or(kv, "damped.c1", 1.0)?,
                f64_or(kv, "damped.c2", 0.05)?,
                f64_or(kv, "damped.c3", 1.0)?,
                f64_or(kv, "damped.delta", 0.0)?,
            );
            let ex = if kv.get_bool("damped.control")?.unwrap_or(false) {
                DampedKinetic::unchecked(c1, c2, c3, delta)
            } else {
                DampedKinetic::new(c1, c2, c3, delta)?
            };
            let ex = match kv.get_f64("damped.sine")? {
                Some(scale) => ex.with_perturbation(Perturbation::Sine { scale }),
                None => ex,
            };
            ex.coefficients(kinetic()?)
        }
        other => return Err(PresetError::Invalid(format!("unknown system {other:?}"))),
    };
    if let Some(s) = kv.get_f64("sigma")? {
        if dims.d2 != dims.m {
            return Err(PresetError::Invalid("a scalar sigma needs d2 = m".into()));
        }
        c = c.with_sigma(
            Arc::new(ScaledIdentity::new(s, dims.d2, dims.m)),
            SigmaBounds::scalar(s),
        );
    }
    if let Some(r) = riesz_from_kv(kv, dims.d2)? {
        c = c.with_b(Arc::new(r));
    }
    Ok(c)
}

/// Coefficients including the interaction selected by `kernel` and `kappa`.
pub fn coefficients_from_kv(kv: &KvConfig, dims: Dims, seed: u64) -> Result<CoefficientSet, PresetError> {
    let base = base_coefficients(kv, dims)?;
    match kernel_from_kv(kv, dims)? {
        None => Ok(base),
        Some(k) => Ok(interaction_z2(base, k, f64_or(kv, "kappa", 0.0)?, seed)?),
    }
}

/// Initial law under `prefix` (`init` or `init2`): Dirac at `prefix.x, prefix.y`
/// (default origin), Gaussian when `prefix.std` is positive.
pub fn initial_law_from_kv(kv: &KvConfig, prefix: &str, dims: Dims) -> Result<InitialLaw, PresetError> {
    let coords = |key: String, d: usize| -> Result<Vec<f64>, PresetError> {
        match kv.get_f64_list(&key)? {
            None => Ok(vec![0.0; d]),
            Some(v) if v.len() == 1 => Ok(vec![v[0]; d]),
            Some(v) if v.len() == d => Ok(v),
            Some(v) => Err(PresetError::Invalid(format!(
                "{key} has {} entries, expected {d}",
                v.len()
            ))),
        }
    };
    let state = PhaseState::new(
        coords(format!("{prefix}.x"), dims.d1)?,
        coords(format!("{prefix}.y"), dims.d2)?,
    )?;
    match kv.get_f64(&format!("{prefix}.std"))? {
        Some(std) if std > 0.0 => Ok(InitialLaw::Gaussian { mean: state, std }),
        _ => Ok(InitialLaw::Dirac(state)),
    }
}

/// Lyapunov function `(1 + |x|^2 + |y|^2)^theta` and the `Phi` family.
pub fn lyapunov_from_kv(kv: &KvConfig, dims: Dims) -> Result<(LyapunovV, PhiFamily), PresetError> {
    let v = LyapunovV::new(f64_or(kv, "lyap.theta", 1.0)?, dims.d1, dims.d2)?;
    let c0 = f64_or(kv, "phi.c0", 1.0)?;
    let phi = match kv.get_str("phi.kind").unwrap_or("linear") {
        "linear" => PhiFamily::Linear { c0 },
        "superlinear" => PhiFamily::Superlinear {
            c0,
            beta: f64_or(kv, "phi.beta", 1.0)?,
        },
        other => return Err(PresetError::Invalid(format!("unknown phi.kind {other:?}"))),
    };
    Ok((v, phi))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config("T = 1\nh = 0.1\nN = 10\nbogus = 3\n").unwrap_err();
        assert_eq!(
            err,
            PresetError::Model(ModelError::Config {
                line: 4,
                message: "unknown key \"bogus\" in `bogus = 3`".into()
            })
        );
    }

    #[test]
    fn example_system_with_riesz_and_kernel() {
        let text = "T = 1\nh = 0.01\nN = 10\nsystem = damped\nriesz.weight = 0.5\nkernel = tanh\nkappa = 0.2\n\
                    init.x = 2\ninit.y = 2\n";
        let (kv, cfg) = parse_config(text).unwrap();
        let c = coefficients_from_kv(&kv, cfg.dims, cfg.seed).unwrap();
        assert_eq!(c.interaction().unwrap().kappa(), 0.2);
        let mut b = [0.0];
        c.eval_b(0.0, &[1.0], &mut b);
        assert!((b[0] - 0.5).abs() < 1e-15);
        match initial_law_from_kv(&kv, "init", cfg.dims).unwrap() {
            InitialLaw::Dirac(s) => assert_eq!(s.to_vec(), vec![2.0, 2.0]),
            other => panic!("unexpected {other:?}"),
        }
    }
}
