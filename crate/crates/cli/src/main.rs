//! `ksde`: run experiments from key-value configuration files.
//!
//! Exit codes: 0 on success, 2 on invalid input, 3 on numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use ksde_core::ergodicity::{
    bootstrap_noise_floor, empirical_v_distance, fit_exponential_decay_with, h_envelope, minimal_envelope_k, DiagError,
    VWeight,
};
use ksde_core::fields::basic::ScaledIdentity;
use ksde_core::integrators::snapshot::write_snapshot;
use ksde_core::integrators::{khasminskii_estimate, simulate_ensemble, IntegratorError, SimOptions};
use ksde_core::manifest::{
    read_csv, verify_manifest, write_csv, write_csv_text, write_distance_csv, write_json, ExperimentManifest,
};
use ksde_core::mckean_vlasov::{
    default_picard_lambda, flow_distance_series, flow_noise_floor, run_picard, sweep_entry, uniform_ergodicity_sweep,
    McKeanError, PicardOptions, SweepOptions,
};
use ksde_core::model::{fmt_f64, KvConfig, ModelError, SimConfig};
use ksde_core::presets::{
    base_coefficients, coefficients_from_kv, initial_law_from_kv, kernel_from_kv, lyapunov_from_kv, parse_config,
    riesz_from_kv, PresetError,
};
use ksde_core::rng::derive_seed;
use ksde_core::verifier::{check_drift_condition, search_constants, SampleSpec, TailPolicy, VerifierError};
use ksde_core::zvonkin::{equivalence_experiment, lambda_sweep, EquivalenceOptions, ZvonkinError};
use serde_json::json;

type TimeVelocityFn = Box<dyn Fn(f64, &[f64]) -> f64 + Sync>;

/// Default output directory when `--out` is not given.
const OUT_ENV: &str = "KSDE_OUT";

#[derive(Parser)]
#[command(name = "ksde", version, about = "Kinetic SDE experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Configuration file.
    config: PathBuf,
    /// Output directory (default: $KSDE_OUT, else `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an ensemble and write a binary snapshot.
    Simulate(Common),
    /// Variation distance decay between two initial laws, with an exponential fit.
    Ergodicity {
        #[command(flatten)]
        common: Common,
        /// Fit a pre-recorded `t,distance,noise_floor` CSV instead of simulating.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Sampled check of the Lyapunov drift condition.
    LyapunovCheck(Common),
    /// Resolvent solve, lambda sweep and equivalence experiment.
    Zvonkin(Common),
    /// Exponential moment estimates over increasing horizons.
    Khasminskii(Common),
    /// Picard iteration for the McKean-Vlasov fixed point.
    MkvPicard(Common),
    /// Decay rates across interaction strengths.
    MkvSweep(Common),
    /// Envelope bound against an empirical V-distance curve.
    HBound(Common),
    /// Check a manifest against the files it lists.
    Verify { manifest: PathBuf },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<IntegratorError>() {
            return match e {
                IntegratorError::Blowup { .. } | IntegratorError::DegenerateReweighting { .. } => 3,
                _ => 2,
            };
        }
        if let Some(e) = cause.downcast_ref::<ZvonkinError>() {
            return match e {
                ZvonkinError::Integrator(i) => exit_code(&anyhow!(i.clone())),
                ZvonkinError::Invalid(_) => 2,
                _ => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<McKeanError>() {
            return match e {
                McKeanError::Integrator(i) => exit_code(&anyhow!(i.clone())),
                McKeanError::Diagnostics(DiagError::InsufficientSignal { .. }) => 3,
                _ => 2,
            };
        }
        if let Some(DiagError::InsufficientSignal { .. }) = cause.downcast_ref::<DiagError>() {
            return 3;
        }
        if cause.downcast_ref::<NumericFailure>().is_some() {
            return 3;
        }
    }
    2
}

/// A run that completed but produced unusable numbers.
#[derive(Debug)]
struct NumericFailure(String);

impl std::fmt::Display for NumericFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for NumericFailure {}

/// Parsed configuration plus the output directory and manifest under construction.
struct Run {
    kv: KvConfig,
    cfg: SimConfig,
    out: PathBuf,
    manifest: ExperimentManifest,
    started: Instant,
}

impl Run {
    fn open(command: &str, common: &Common) -> Result<Self> {
        let text =
            std::fs::read_to_string(&common.config).with_context(|| format!("reading {}", common.config.display()))?;
        let (kv, cfg) = parse_config(&text)?;
        let out = match &common.out {
            Some(p) => p.clone(),
            None => std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out")),
        };
        std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let mut manifest = ExperimentManifest::new(command, &kv.canonical_text(), cfg.seed);
        manifest.threads = common.threads;
        manifest.steps = cfg.steps() as u64;
        Ok(Self {
            kv,
            cfg,
            out,
            manifest,
            started: Instant::now(),
        })
    }

    fn hash(&self) -> String {
        self.manifest.config_hash.clone()
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn add(&mut self, file: &Path) -> Result<()> {
        self.manifest.add_output(&self.out, file)?;
        Ok(())
    }

    fn json(&mut self, name: &str, value: &serde_json::Value) -> Result<()> {
        let p = self.path(name);
        write_json(&p, &self.hash(), value)?;
        self.add(&p)
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.wall_clock_seconds = self.started.elapsed().as_secs_f64();
        let p = self.path("manifest.json");
        self.manifest.write(&p)?;
        println!("wrote {}", p.display());
        Ok(())
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.kv.get_f64(key)?.unwrap_or(default))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        Ok(self.kv.get_usize(key)?.unwrap_or(default))
    }
}

fn with_pool<T: Send>(threads: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if threads == 0 {
        return Err(ModelError::Invalid("--threads must be positive".into()).into());
    }
    rayon::ThreadPoolBuilder::new().num_threads(threads).build()?.install(f)
}

fn simulate(common: &Common) -> Result<()> {
    let mut run = Run::open("simulate", common)?;
    let dims = run.cfg.dims;
    let coeffs = coefficients_from_kv(&run.kv, dims, run.cfg.seed)?;
    let init = initial_law_from_kv(&run.kv, "init", dims)?;
    let ens = simulate_ensemble(&run.cfg, &coeffs, &init, None, SimOptions::default())?;
    let snap = write_snapshot(&run.path("snapshot.bin"), &ens, &run.hash())?;
    run.add(&run.path("snapshot.bin"))?;
    run.add(&snap)?;
    run.json(
        "summary.json",
        &json!({ "particles": ens.len(), "dead": ens.dead_count(), "digest": ens.digest() }),
    )?;
    run.finish()?;
    if ens.is_unstable() {
        return Err(NumericFailure(format!("blowup: {} of {} particles dead", ens.dead_count(), ens.len())).into());
    }
    Ok(())
}

fn fit_summary(times: &[f64], distance: &[f64], floor: &[f64], window: (f64, f64)) -> serde_json::Value {
    let entry = sweep_entry(0.0, times.to_vec(), distance.to_vec(), floor.to_vec(), window);
    match &entry.fit {
        Some(f) => json!({
            "rate": f.rate, "prefactor": f.prefactor, "r_squared": f.r_squared, "verdict": entry.verdict,
            "points_used": f.used.iter().filter(|u| **u).count(),
        }),
        None => json!({ "verdict": entry.verdict, "points_used": 0 }),
    }
}

fn ergodicity(common: &Common, replay: Option<&Path>) -> Result<()> {
    let mut run = Run::open("ergodicity", common)?;
    let window = (run.f64_or("fit.start", 0.0)?, run.f64_or("fit.end", run.cfg.horizon)?);
    let (times, distance, floor) = match replay {
        Some(p) => {
            let (_, header, rows) = read_csv(p).with_context(|| format!("reading {}", p.display()))?;
            if header != ["t", "distance", "noise_floor"] {
                return Err(ModelError::Invalid(format!(
                    "replay CSV header {header:?}, expected t,distance,noise_floor"
                ))
                .into());
            }
            let col = |i: usize| rows.iter().map(|r| r[i]).collect::<Vec<f64>>();
            (col(0), col(1), col(2))
        }
        None => {
            let dims = run.cfg.dims;
            let coeffs = coefficients_from_kv(&run.kv, dims, run.cfg.seed)?;
            let a = initial_law_from_kv(&run.kv, "init", dims)?;
            let b = initial_law_from_kv(&run.kv, "init2", dims)?;
            let cfg_a = run.cfg.clone().with_seed(derive_seed(run.cfg.seed, 0));
            let cfg_b = run.cfg.clone().with_seed(derive_seed(run.cfg.seed, 1));
            let fa = simulate_ensemble(&cfg_a, &coeffs, &a, None, SimOptions::flow())?
                .flow
                .expect("flow recorded");
            let fb = simulate_ensemble(&cfg_b, &coeffs, &b, None, SimOptions::flow())?
                .flow
                .expect("flow recorded");
            let d = flow_distance_series(&fa, &fb)?;
            let floor = flow_noise_floor(&fa, run.cfg.particles, run.usize_or("resamples", 20)?, cfg_a.seed);
            (fa.times(), d, floor)
        }
    };
    let p = run.path("distance.csv");
    write_distance_csv(&p, &run.hash(), &times, &distance, &floor)?;
    run.add(&p)?;
    let summary = fit_summary(&times, &distance, &floor, window);
    println!("{summary}");
    run.json("fit.json", &summary)?;
    run.finish()
}

fn lyapunov_check(common: &Common) -> Result<()> {
    let mut run = Run::open("lyapunov-check", common)?;
    let dims = run.cfg.dims;
    let coeffs = base_coefficients(&run.kv, dims)?;
    let (v, phi) = lyapunov_from_kv(&run.kv, dims)?;
    let eps = run.f64_or("lyap.eps", 0.1)?;
    let mut spec = SampleSpec::new(
        run.f64_or("lyap.radius", 50.0)?,
        run.usize_or("lyap.radii", 24)?,
        run.usize_or("lyap.directions", 32)?,
    );
    spec.seed = run.cfg.seed;
    let (report, constants) = match run.kv.get_f64("lyap.k")? {
        Some(k) => (check_drift_condition(&coeffs, &v, &phi, k, eps, &spec)?, None),
        None => {
            let policy = match run.kv.get_str("lyap.policy").unwrap_or("dissipative") {
                "dissipative" => TailPolicy::Dissipative,
                "compact" => TailPolicy::Compact,
                other => return Err(PresetError::Invalid(format!("unknown lyap.policy {other:?}")).into()),
            };
            match search_constants(&coeffs, &v, &phi, eps, &spec, policy, run.f64_or("lyap.c0_max", 100.0)?) {
                Ok(found) => (found.report, Some((found.c0, found.k))),
                Err(VerifierError::NotCertifiable) => {
                    let report = check_drift_condition(&coeffs, &v, &phi, 0.0, eps, &spec)?;
                    (report, None)
                }
                Err(e) => return Err(e.into()),
            }
        }
    };
    let p = run.path("margins.csv");
    write_csv_text(&p, &run.hash(), &report.margins_csv())?;
    run.add(&p)?;
    let summary = json!({
        "verdict": report.verdict,
        "statement": report.statement(),
        "c0": constants.map(|c| c.0),
        "k": constants.map(|c| c.1).unwrap_or(report.k),
        "eps": eps,
        "points": report.points.len(),
        "min_margin": report.min_margin,
        "mean_margin": report.mean_margin,
        "worst_point": report.worst_point,
        "flagged": report.flagged,
        "domain": spec.describe(),
    });
    println!("{}", report.statement());
    run.json("report.json", &summary)?;
    run.finish()
}

fn zvonkin(common: &Common) -> Result<()> {
    let mut run = Run::open("zvonkin", common)?;
    let dims = run.cfg.dims;
    let coeffs = coefficients_from_kv(&run.kv, dims, run.cfg.seed)?;
    let b =
        riesz_from_kv(&run.kv, dims.d2)?.ok_or_else(|| PresetError::Invalid("zvonkin needs riesz.weight".into()))?;
    let sigma = ScaledIdentity::new(run.f64_or("sigma", 1.0)?, dims.d2, dims.m);
    let opts = EquivalenceOptions {
        target: run.f64_or("zv.target", 0.1)?,
        half_width: run.f64_or("zv.half_width", 10.0)?,
        points: run.usize_or("zv.points", 4001)?,
        resamples: run.usize_or("resamples", 20)?,
    };
    let sweep = lambda_sweep(&b, &sigma, dims.m, opts.target, opts.half_width, opts.points)?;
    let p = run.path("solution.csv");
    write_csv_text(&p, &run.hash(), &sweep.solution.csv())?;
    run.add(&p)?;
    let rows: Vec<String> = sweep
        .history
        .iter()
        .map(|(l, b)| format!("{},{}", fmt_f64(*l), fmt_f64(*b)))
        .collect();
    let p = run.path("sweep.csv");
    write_csv(&p, &run.hash(), "lambda,bound", &rows)?;
    run.add(&p)?;
    let init = initial_law_from_kv(&run.kv, "init", dims)?;
    let rep = equivalence_experiment(&coeffs, &run.cfg, &init, &opts)?;
    println!(
        "lambda = {}, TV = {:.4}, floor = {:.4}, equivalent = {}",
        rep.lambda, rep.tv, rep.noise_floor, rep.equivalent
    );
    run.json("equivalence.json", &serde_json::to_value(&rep)?)?;
    run.finish()
}

fn khasminskii(common: &Common) -> Result<()> {
    let mut run = Run::open("khasminskii", common)?;
    let dims = run.cfg.dims;
    let coeffs = coefficients_from_kv(&run.kv, dims, run.cfg.seed)?;
    let init = initial_law_from_kv(&run.kv, "init", dims)?;
    let a = run.f64_or("kh.a", 1.0)?;
    let alpha = run.f64_or("kh.alpha", 0.25)?;
    let floor = run.f64_or("kh.floor", 1e-4)?;
    let f: TimeVelocityFn = match run.kv.get_str("kh.f").unwrap_or("constant") {
        "constant" => Box::new(move |_, _| a),
        "riesz" => {
            Box::new(move |_, y: &[f64]| a * y.iter().map(|v| v * v).sum::<f64>().sqrt().max(floor).powf(-alpha))
        }
        other => return Err(PresetError::Invalid(format!("unknown kh.f {other:?}")).into()),
    };
    let resamples = run.usize_or("resamples", 200)?;
    let confidence = run.f64_or("kh.confidence", 0.95)?;
    let mut rows = Vec::new();
    let mut last = None;
    for j in 1..=4 {
        let horizon = run.cfg.horizon * j as f64 / 4.0;
        let cfg = SimConfig {
            horizon,
            ..run.cfg.clone()
        };
        let est = khasminskii_estimate(&cfg, &coeffs, &init, &*f, resamples, confidence, None)?;
        rows.push(format!(
            "{},{},{},{},{}",
            fmt_f64(horizon),
            fmt_f64(est.estimate),
            fmt_f64(est.standard_error),
            fmt_f64(est.ci_low),
            fmt_f64(est.ci_high)
        ));
        last = Some(est);
    }
    let p = run.path("moments.csv");
    write_csv(&p, &run.hash(), "T,estimate,standard_error,ci_low,ci_high", &rows)?;
    run.add(&p)?;
    let est = last.expect("four horizons");
    println!("E[exp(int |f|^2)] = {} [{}, {}]", est.estimate, est.ci_low, est.ci_high);
    run.json("estimate.json", &serde_json::to_value(&est)?)?;
    if est.infinite {
        run.finish()?;
        return Err(NumericFailure("exponential moment overflowed".into()).into());
    }
    run.finish()
}

fn mkv_picard(common: &Common) -> Result<()> {
    let mut run = Run::open("mkv-picard", common)?;
    let dims = run.cfg.dims;
    let coeffs = coefficients_from_kv(&run.kv, dims, run.cfg.seed)?;
    let init = initial_law_from_kv(&run.kv, "init", dims)?;
    let kappa = run.f64_or("kappa", 0.0)?;
    let mut opts = PicardOptions::new(run.f64_or("picard.lambda", default_picard_lambda(kappa, run.cfg.horizon))?);
    opts.common_random_numbers = run.kv.get_bool("picard.crn")?.unwrap_or(true);
    opts.max_iterations = run.usize_or("picard.max_iter", 20)?;
    opts.resamples = run.usize_or("resamples", 20)?;
    let res = run_picard(&run.cfg, &coeffs, &init, &opts)?;
    let rows: Vec<String> = res
        .state
        .rho_history
        .iter()
        .enumerate()
        .map(|(i, r)| format!("{},{}", i + 1, fmt_f64(*r)))
        .collect();
    let p = run.path("rho.csv");
    write_csv(&p, &run.hash(), "iteration,rho", &rows)?;
    run.add(&p)?;
    let summary = json!({
        "lambda": opts.lambda,
        "iterations": res.state.iteration,
        "converged": res.converged,
        "noise_floor": res.noise_floor,
        "ratios": res.ratios,
        "particle_tv": res.particle_tv,
        "particle_floor": res.particle_floor,
        "matches_particles": res.matches_particles,
    });
    println!("{summary}");
    run.json("picard.json", &summary)?;
    run.finish()
}

fn mkv_sweep(common: &Common) -> Result<()> {
    let mut run = Run::open("mkv-sweep", common)?;
    let dims = run.cfg.dims;
    let base = base_coefficients(&run.kv, dims)?;
    let kernel =
        kernel_from_kv(&run.kv, dims)?.ok_or_else(|| PresetError::Invalid("mkv-sweep needs a kernel".into()))?;
    let kappas = run
        .kv
        .get_f64_list("sweep.kappas")?
        .unwrap_or_else(|| vec![0.0, 0.1, 0.2]);
    let a = initial_law_from_kv(&run.kv, "init", dims)?;
    let b = initial_law_from_kv(&run.kv, "init2", dims)?;
    let opts = SweepOptions {
        fit_window: (run.f64_or("fit.start", 0.0)?, run.f64_or("fit.end", run.cfg.horizon)?),
        resamples: run.usize_or("resamples", 20)?,
    };
    let report = uniform_ergodicity_sweep(&base, kernel, &kappas, (&a, &b), &run.cfg, &opts)?;
    for (j, e) in report.entries.iter().enumerate() {
        let p = run.path(&format!("distance_{j}.csv"));
        write_csv_text(&p, &run.hash(), &e.csv())?;
        run.add(&p)?;
    }
    let entries: Vec<serde_json::Value> = report
        .entries
        .iter()
        .map(|e| json!({ "kappa": e.kappa, "rate": e.rate(), "r_squared": e.fit.as_ref().map(|f| f.r_squared), "verdict": e.verdict }))
        .collect();
    let summary = json!({ "entries": entries, "kappa_star": report.kappa_star });
    println!("{summary}");
    run.json("sweep.json", &summary)?;
    run.finish()
}

fn h_bound(common: &Common) -> Result<()> {
    let mut run = Run::open("h-bound", common)?;
    let dims = run.cfg.dims;
    let coeffs = coefficients_from_kv(&run.kv, dims, run.cfg.seed)?;
    let (v, phi) = lyapunov_from_kv(&run.kv, dims)?;
    let v0 = run.f64_or("h.v0", 9.0)?;
    let a = initial_law_from_kv(&run.kv, "init", dims)?;
    let b = initial_law_from_kv(&run.kv, "init2", dims)?;
    let cfg_a = run.cfg.clone().with_seed(derive_seed(run.cfg.seed, 0));
    let cfg_b = run.cfg.clone().with_seed(derive_seed(run.cfg.seed, 1));
    let fa = simulate_ensemble(&cfg_a, &coeffs, &a, None, SimOptions::flow())?
        .flow
        .expect("flow recorded");
    let fb = simulate_ensemble(&cfg_b, &coeffs, &b, None, SimOptions::flow())?
        .flow
        .expect("flow recorded");
    let weight = VWeight::Lyapunov(v);
    let times = fa.times();
    let data = (0..fa.len())
        .map(|i| empirical_v_distance(&fa.histogram(i), &fb.histogram(i), &weight))
        .collect::<Result<Vec<f64>, DiagError>>()?;
    let resamples = run.usize_or("resamples", 20)?;
    let floors: Vec<f64> = fa
        .slices()
        .iter()
        .map(|l| bootstrap_noise_floor(l, &run.cfg.histogram, run.cfg.particles, resamples, &weight, cfg_a.seed))
        .collect();
    let (lambda, r_squared) = match run.kv.get_f64("h.lambda")? {
        Some(l) => (l, None),
        None => {
            let fit = fit_exponential_decay_with(&times, &data, &floors, None)?;
            if fit.rate <= 0.0 {
                return Err(NumericFailure(format!("no decay in the V-distance (rate {:.4})", fit.rate)).into());
            }
            (fit.rate, Some(fit.r_squared))
        }
    };
    let k = match run.kv.get_f64("h.k")? {
        Some(k) => k,
        None => minimal_envelope_k(&phi, v0, lambda, &times, &data)?,
    };
    let env = h_envelope(&phi, v0, k, lambda, &times)?;
    let rows: Vec<String> = (0..times.len())
        .map(|i| {
            format!(
                "{},{},{},{}",
                fmt_f64(times[i]),
                fmt_f64(data[i]),
                fmt_f64(floors[i]),
                fmt_f64(env[i])
            )
        })
        .collect();
    let p = run.path("envelope.csv");
    write_csv(&p, &run.hash(), "t,v_distance,noise_floor,envelope", &rows)?;
    run.add(&p)?;
    let dominated = env.iter().zip(&data).all(|(e, d)| e >= d);
    let summary =
        json!({ "lambda": lambda, "fit_r_squared": r_squared, "k": k, "v0": v0, "phi": phi, "dominates": dominated });
    println!("{summary}");
    run.json("envelope.json", &summary)?;
    run.finish()
}

fn verify(path: &Path) -> Result<()> {
    let report = verify_manifest(path).with_context(|| format!("reading {}", path.display()))?;
    for p in &report.problems {
        println!("{p}");
    }
    println!(
        "checked {} file(s), {} problem(s)",
        report.checked,
        report.problems.len()
    );
    if report.is_ok() {
        Ok(())
    } else {
        Err(ModelError::Invalid("manifest does not match its outputs".into()).into())
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Verify { manifest } => verify(manifest),
        Command::Simulate(c) => with_pool(c.threads, || simulate(c)),
        Command::Ergodicity { common, replay } => with_pool(common.threads, || ergodicity(common, replay.as_deref())),
        Command::LyapunovCheck(c) => with_pool(c.threads, || lyapunov_check(c)),
        Command::Zvonkin(c) => with_pool(c.threads, || zvonkin(c)),
        Command::Khasminskii(c) => with_pool(c.threads, || khasminskii(c)),
        Command::MkvPicard(c) => with_pool(c.threads, || mkv_picard(c)),
        Command::MkvSweep(c) => with_pool(c.threads, || mkv_sweep(c)),
        Command::HBound(c) => with_pool(c.threads, || h_bound(c)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
