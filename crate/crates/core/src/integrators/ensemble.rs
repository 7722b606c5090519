use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::step::{step_in_place, StepWorkspace};
use super::IntegratorError;
use crate::law::EmpiricalLaw;
use crate::mckean_vlasov::MeasureFlow;
use crate::model::{validate_config, CoefficientSet, MeasureArg, PhaseState, Scheme, SimConfig};
use crate::rng::{derive_seed, fill_normals, salt, stream_rng, NoiseStream};

/// Fraction of dead particles above which a run is flagged unstable.
pub const UNSTABLE_FRACTION: f64 = 1e-3;

/// Initial law of the particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialLaw {
    Dirac(PhaseState),
    /// Independent Gaussian coordinates around `mean` with common `std`.
    Gaussian {
        mean: PhaseState,
        std: f64,
    },
    /// Particle `i` starts at `points[i % len]`.
    Points(Vec<PhaseState>),
}

impl InitialLaw {
    /// Writes particle `i`'s starting point. Depends only on `(seed, i)`.
    pub fn sample(&self, seed: u64, i: usize, x: &mut [f64], y: &mut [f64]) {
        match self {
            InitialLaw::Dirac(s) => {
                x.copy_from_slice(s.x());
                y.copy_from_slice(s.y());
            }
            InitialLaw::Gaussian { mean, std } => {
                let mut rng = stream_rng(derive_seed(seed, salt::INITIAL), i as u64);
                let mut z = vec![0.0; x.len() + y.len()];
                fill_normals(&mut rng, &mut z);
                for (k, v) in x.iter_mut().enumerate() {
                    *v = mean.x()[k] + std * z[k];
                }
                for (k, v) in y.iter_mut().enumerate() {
                    *v = mean.y()[k] + std * z[x.len() + k];
                }
            }
            InitialLaw::Points(points) => {
                let p = &points[i % points.len()];
                x.copy_from_slice(p.x());
                y.copy_from_slice(p.y());
            }
        }
    }

    fn dims(&self) -> (usize, usize) {
        match self {
            InitialLaw::Dirac(s) | InitialLaw::Gaussian { mean: s, .. } => (s.d1(), s.d2()),
            InitialLaw::Points(p) => (p[0].d1(), p[0].d2()),
        }
    }

    /// The law realized by `n` particles under `seed`.
    pub fn empirical(&self, seed: u64, n: usize) -> EmpiricalLaw {
        let (d1, d2) = self.dims();
        let mut points = vec![0.0; n * (d1 + d2)];
        for (i, p) in points.chunks_mut(d1 + d2).enumerate() {
            let (x, y) = p.split_at_mut(d1);
            self.sample(seed, i, x, y);
        }
        EmpiricalLaw::new(d1, d2, points)
    }
}

/// What a run keeps besides the final states.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Keep every particle's full path.
    pub store_paths: bool,
    /// Keep the Brownian increments alongside the paths.
    pub store_increments: bool,
    /// Build a [`MeasureFlow`] at the config's recorded steps.
    pub record_flow: bool,
}

impl SimOptions {
    pub fn flow() -> Self {
        Self {
            record_flow: true,
            ..Self::default()
        }
    }

    pub fn paths() -> Self {
        Self {
            store_paths: true,
            store_increments: true,
            record_flow: false,
        }
    }
}

/// One particle's path on the full time grid. States are concatenated
/// `[x, y]` rows; rows after a blowup are NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSample {
    pub times: Vec<f64>,
    pub states: Vec<f64>,
    /// `K x m` increments actually used, when stored.
    pub increments: Option<Vec<f64>>,
    dim: usize,
    m: usize,
}

impl PathSample {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn increment(&self, k: usize) -> Option<&[f64]> {
        self.increments.as_ref().map(|v| &v[k * self.m..(k + 1) * self.m])
    }
}

/// Observes each particle's trajectory as it is generated.
pub trait PathObserver: Sync {
    type State: Send;

    fn start(&self, particle: usize, x: &[f64], y: &[f64]) -> Self::State;

    /// Called after step `k` (from `t_k` to `t_next`) with the new state and
    /// the increment used. Not called after a particle dies.
    #[allow(clippy::too_many_arguments)]
    fn step(&self, state: &mut Self::State, k: usize, t_next: f64, x: &[f64], y: &[f64], dw: &[f64]);
}

/// Observer that records nothing.
pub struct NoObserver;

impl PathObserver for NoObserver {
    type State = ();

    fn start(&self, _particle: usize, _x: &[f64], _y: &[f64]) {}

    fn step(&self, _s: &mut (), _k: usize, _t: f64, _x: &[f64], _y: &[f64], _dw: &[f64]) {}
}

/// Result of a run: final states, optional paths and flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub config: SimConfig,
    pub initial_x: Vec<f64>,
    pub initial_y: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub alive: Vec<bool>,
    /// Step at which each dead particle blew up.
    pub death_step: Vec<Option<usize>>,
    pub paths: Option<Vec<PathSample>>,
    pub flow: Option<MeasureFlow>,
}

impl Ensemble {
    pub fn len(&self) -> usize {
        self.alive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alive.is_empty()
    }

    pub fn scheme(&self) -> Scheme {
        self.config.scheme
    }

    pub fn dead_count(&self) -> usize {
        self.alive.iter().filter(|a| !**a).count()
    }

    /// More than 0.1% of the particles blew up.
    pub fn is_unstable(&self) -> bool {
        self.dead_count() as f64 > UNSTABLE_FRACTION * self.len() as f64
    }

    pub fn final_law(&self) -> EmpiricalLaw {
        let d = self.config.dims;
        EmpiricalLaw::from_states(d.d1, d.d2, &self.x, &self.y, &self.alive, None)
    }

    pub fn initial_state(&self, i: usize) -> PhaseState {
        let d = self.config.dims;
        PhaseState::new(
            self.initial_x[i * d.d1..(i + 1) * d.d1].to_vec(),
            self.initial_y[i * d.d2..(i + 1) * d.d2].to_vec(),
        )
        .expect("initial states are finite")
    }

    /// Bit pattern digest of all numeric content, for reproducibility checks.
    pub fn digest(&self) -> String {
        let mut bytes = Vec::new();
        for v in self.x.iter().chain(&self.y) {
            bytes.extend_from_slice(&v.to_bits().to_le_bytes());
        }
        bytes.extend(self.alive.iter().map(|a| *a as u8));
        if let Some(paths) = &self.paths {
            for p in paths {
                for v in p.states.iter().chain(p.increments.iter().flatten()) {
                    bytes.extend_from_slice(&v.to_bits().to_le_bytes());
                }
            }
        }
        if let Some(flow) = &self.flow {
            for s in flow.slices() {
                for v in s.points() {
                    bytes.extend_from_slice(&v.to_bits().to_le_bytes());
                }
            }
        }
        crate::manifest::sha256_hex(&bytes)
    }
}

struct Outcome<S> {
    x0: Vec<f64>,
    y0: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    death: Option<usize>,
    path: Option<PathSample>,
    recorded: Vec<f64>,
    observed: S,
}

/// Simulates `cfg.particles` independent particles. With a frozen flow, the
/// measure argument at step `k` is the flow's slice nearest to `t_k`.
pub fn simulate_ensemble(
    cfg: &SimConfig,
    coeffs: &CoefficientSet,
    init: &InitialLaw,
    frozen_flow: Option<&MeasureFlow>,
    opts: SimOptions,
) -> Result<Ensemble, IntegratorError> {
    simulate_observed(cfg, coeffs, init, frozen_flow, opts, &NoObserver).map(|(e, _)| e)
}

/// [`simulate_ensemble`] feeding every particle's trajectory to `observer`.
pub fn simulate_observed<O: PathObserver>(
    cfg: &SimConfig,
    coeffs: &CoefficientSet,
    init: &InitialLaw,
    frozen_flow: Option<&MeasureFlow>,
    opts: SimOptions,
    observer: &O,
) -> Result<(Ensemble, Vec<O::State>), IntegratorError> {
    let report = validate_config(cfg, coeffs);
    if !report.is_valid() {
        return Err(IntegratorError::Invalid(report.violations.join("; ")));
    }
    let prepared: Vec<MeasureArg> = match (frozen_flow, coeffs.interaction()) {
        (Some(flow), Some(inter)) => flow.slices().iter().map(|law| inter.prepare(law)).collect(),
        (None, Some(inter)) if inter.kappa() != 0.0 => {
            return Err(IntegratorError::Invalid(
                "measure-dependent coefficients need a frozen flow or the particle system".into(),
            ))
        }
        _ => Vec::new(),
    };
    let flow_index = |k: usize| frozen_flow.map(|f| f.slice_for_step(k));
    let dims = cfg.dims;
    let (d1, d2, m, d) = (dims.d1, dims.d2, dims.m, dims.phase());
    let steps = cfg.steps();
    let h = cfg.step;
    let recorded = cfg.recorded_steps();
    let times: Vec<f64> = (0..=steps).map(|k| cfg.time(k)).collect();

    let outcomes: Vec<Outcome<O::State>> = (0..cfg.particles)
        .into_par_iter()
        .map(|i| {
            let mut x = vec![0.0; d1];
            let mut y = vec![0.0; d2];
            init.sample(cfg.seed, i, &mut x, &mut y);
            let (x0, y0) = (x.clone(), y.clone());
            let mut observed = observer.start(i, &x, &y);
            let mut noise = NoiseStream::new(cfg.seed, i as u64, m);
            let mut ws = StepWorkspace::new(dims);
            let mut dw = vec![0.0; m];
            let mut path_states = opts.store_paths.then(|| {
                let mut v = Vec::with_capacity((steps + 1) * d);
                v.extend_from_slice(&x);
                v.extend_from_slice(&y);
                v
            });
            let mut increments = (opts.store_paths && opts.store_increments).then(|| Vec::with_capacity(steps * m));
            let mut rec = Vec::new();
            let mut next_rec = 0;
            if opts.record_flow {
                rec.reserve(recorded.len() * d);
                rec.extend_from_slice(&x);
                rec.extend_from_slice(&y);
                next_rec = 1;
            }
            let mut death = None;
            for k in 0..steps {
                noise.increments(k as u64, h, &mut dw);
                let mu = flow_index(k).and_then(|j| prepared.get(j));
                let ok = step_in_place(coeffs, cfg.scheme, times[k], h, &mut x, &mut y, mu, &dw, &mut ws);
                if let Some(inc) = increments.as_mut() {
                    inc.extend_from_slice(&dw);
                }
                if !ok {
                    death = Some(k + 1);
                    break;
                }
                observer.step(&mut observed, k, times[k + 1], &x, &y, &dw);
                if let Some(p) = path_states.as_mut() {
                    p.extend_from_slice(&x);
                    p.extend_from_slice(&y);
                }
                if opts.record_flow && next_rec < recorded.len() && recorded[next_rec] == k + 1 {
                    rec.extend_from_slice(&x);
                    rec.extend_from_slice(&y);
                    next_rec += 1;
                }
            }
            if death.is_some() {
                if let Some(p) = path_states.as_mut() {
                    p.resize((steps + 1) * d, f64::NAN);
                }
                if let Some(inc) = increments.as_mut() {
                    inc.resize(steps * m, f64::NAN);
                }
                if opts.record_flow {
                    rec.resize(recorded.len() * d, f64::NAN);
                }
            }
            Outcome {
                x0,
                y0,
                x,
                y,
                death,
                path: path_states.map(|states| PathSample {
                    times: times.clone(),
                    states,
                    increments,
                    dim: d,
                    m,
                }),
                recorded: rec,
                observed,
            }
        })
        .collect();

    let n = outcomes.len();
    let mut ens = Ensemble {
        config: cfg.clone(),
        initial_x: Vec::with_capacity(n * d1),
        initial_y: Vec::with_capacity(n * d2),
        x: Vec::with_capacity(n * d1),
        y: Vec::with_capacity(n * d2),
        alive: Vec::with_capacity(n),
        death_step: Vec::with_capacity(n),
        paths: opts.store_paths.then(|| Vec::with_capacity(n)),
        flow: None,
    };
    let mut states = Vec::with_capacity(n);
    let mut recorded_all = Vec::with_capacity(if opts.record_flow { n } else { 0 });
    for o in outcomes {
        ens.initial_x.extend_from_slice(&o.x0);
        ens.initial_y.extend_from_slice(&o.y0);
        ens.x.extend_from_slice(&o.x);
        ens.y.extend_from_slice(&o.y);
        ens.alive.push(o.death.is_none());
        ens.death_step.push(o.death);
        if let (Some(paths), Some(p)) = (ens.paths.as_mut(), o.path) {
            paths.push(p);
        }
        if opts.record_flow {
            recorded_all.push(o.recorded);
        }
        states.push(o.observed);
    }
    if opts.record_flow {
        ens.flow = Some(flow_from_records(cfg, &recorded, &recorded_all));
    }
    Ok((ens, states))
}

/// Transposes per-particle recorded rows into per-slice clouds; NaN rows are dead.
pub(crate) fn flow_from_records(cfg: &SimConfig, recorded: &[usize], rows: &[Vec<f64>]) -> MeasureFlow {
    let dims = cfg.dims;
    let d = dims.phase();
    let n = rows.len();
    let slices = (0..recorded.len())
        .map(|r| {
            let mut x = Vec::with_capacity(n * dims.d1);
            let mut y = Vec::with_capacity(n * dims.d2);
            let mut alive = Vec::with_capacity(n);
            for row in rows {
                let p = &row[r * d..(r + 1) * d];
                x.extend_from_slice(&p[..dims.d1]);
                y.extend_from_slice(&p[dims.d1..]);
                alive.push(p.iter().all(|v| v.is_finite()));
            }
            EmpiricalLaw::from_states(dims.d1, dims.d2, &x, &y, &alive, None)
        })
        .collect();
    MeasureFlow::new(cfg.step, recorded.to_vec(), slices, cfg.histogram.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Dims;

    #[test]
    fn zero_dynamics_constant_path() {
        let cfg = SimConfig::new(1.0, 0.1, 1, 3, Dims::kinetic(1));
        let mut c = CoefficientSet::zero(Dims::kinetic(1));
        c = c.with_sigma(
            std::sync::Arc::new(crate::fields::basic::ScaledIdentity::new(0.0, 1, 1)),
            crate::model::SigmaBounds::scalar(1.0),
        );
        let init = InitialLaw::Dirac(PhaseState::origin(1, 1));
        let e = simulate_ensemble(&cfg, &c, &init, None, SimOptions::paths()).unwrap();
        let p = &e.paths.as_ref().unwrap()[0];
        assert_eq!(p.len(), 11);
        assert!(p.states.iter().all(|v| *v == 0.0));
        assert_eq!(p.increments.as_ref().unwrap().len(), 10);
    }

    #[test]
    fn increments_reproduce_path() {
        let cfg = SimConfig::new(0.5, 0.05, 3, 11, Dims::kinetic(1));
        let c = crate::fields::basic::linear_langevin(1, 1.0);
        let init = InitialLaw::Gaussian {
            mean: PhaseState::origin(1, 1),
            std: 1.0,
        };
        let e = simulate_ensemble(&cfg, &c, &init, None, SimOptions::paths()).unwrap();
        for p in e.paths.as_ref().unwrap() {
            let mut s = PhaseState::new(vec![p.state(0)[0]], vec![p.state(0)[1]]).unwrap();
            for k in 0..cfg.steps() {
                s = super::super::em_step(&s, cfg.time(k), cfg.step, &c, None, p.increment(k).unwrap()).unwrap();
                assert_eq!(s.to_vec(), p.state(k + 1));
            }
        }
    }

    #[test]
    fn flow_slices_match_paths() {
        let cfg = SimConfig::new(1.0, 0.1, 20, 5, Dims::kinetic(1)).with_record_every(0.5);
        let c = crate::fields::basic::linear_langevin(1, 1.0);
        let init = InitialLaw::Dirac(PhaseState::new(vec![1.0], vec![0.0]).unwrap());
        let opts = SimOptions {
            store_paths: true,
            store_increments: false,
            record_flow: true,
        };
        let e = simulate_ensemble(&cfg, &c, &init, None, opts).unwrap();
        let flow = e.flow.as_ref().unwrap();
        assert_eq!(flow.steps(), &[0, 5, 10]);
        for (j, p) in e.paths.as_ref().unwrap().iter().enumerate() {
            assert_eq!(flow.slice(1).point(j), p.state(5));
        }
        assert_eq!(flow.last().points(), e.final_law().points());
    }
}
