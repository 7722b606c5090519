use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ksde_core::integrators::snapshot::read_snapshot;
use ksde_core::manifest::write_distance_csv;

fn ksde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksde"))
        .args(args)
        .env_remove("KSDE_OUT")
        .output()
        .unwrap()
}

fn config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn simulate_zero_field_keeps_positions_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "zero.cfg",
        "T = 1\nh = 0.1\nN = 50\nseed = 3\nsystem = zero\ninit.x = 0.5\ninit.y = -1\n",
    );
    let out = dir.path().join("out");
    let o = ksde(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let snap = read_snapshot(&out.join("snapshot.bin")).unwrap();
    assert!(snap.x.iter().all(|v| *v == 0.5));
    assert!(snap.y.iter().any(|v| *v != -1.0));
    let v = ksde(&["verify", out.join("manifest.json").to_str().unwrap()]);
    assert!(v.status.success(), "{}", stdout(&v));
}

#[test]
fn ergodicity_replay_recovers_unit_rate() {
    let dir = tempfile::tempdir().unwrap();
    let times: Vec<f64> = (0..=20).map(|i| i as f64 * 0.25).collect();
    let d: Vec<f64> = times.iter().map(|t| 2.0 * (-t).exp()).collect();
    let floor = vec![1e-3; times.len()];
    let csv = dir.path().join("d.csv");
    write_distance_csv(&csv, "none", &times, &d, &floor).unwrap();
    let cfg = config(dir.path(), "e.cfg", "T = 5\nh = 0.25\nN = 10\n");
    let out = dir.path().join("out");
    let o = ksde(&[
        "ergodicity",
        cfg.to_str().unwrap(),
        "--replay",
        csv.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = json(&out.join("fit.json"));
    assert!((fit["rate"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(fit["verdict"], "decay_confirmed");
}

#[test]
fn lyapunov_negative_control_is_data_not_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "l.cfg",
        "T = 1\nh = 0.1\nN = 10\nsystem = damped\ndamped.c1 = 1\ndamped.c2 = 0.05\ndamped.c3 = 0\ndamped.control = true\nlyap.radius = 20\nlyap.radii = 8\nlyap.directions = 8\n",
    );
    let out = dir.path().join("out");
    let o = ksde(&["lyapunov-check", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&out.join("report.json"))["verdict"], "fails");
    assert!(fs::read_to_string(out.join("margins.csv"))
        .unwrap()
        .starts_with("# config_hash="));
}

#[test]
fn unknown_key_exits_2_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "bad.cfg", "T = 1\nh = 0.1\nN = 10\nturbo = yes\n");
    let o = ksde(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
    assert!(stderr(&o).contains("turbo = yes"));
}

#[test]
fn blowup_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "b.cfg",
        "T = 10\nh = 0.01\nN = 20\nsystem = langevin\nlangevin.gamma = -20\nsigma = 1\ninit.y = 1\n",
    );
    let o = ksde(&[
        "simulate",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn verify_detects_tampering() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "s.cfg", "T = 0.5\nh = 0.1\nN = 20\nsystem = langevin\n");
    let out = dir.path().join("out");
    assert!(
        ksde(&["simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status
            .success()
    );
    let summary = out.join("summary.json");
    let mut v = json(&summary);
    v["config_hash"] = serde_json::Value::String("0".repeat(64));
    fs::write(&summary, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    let o = ksde(&["verify", out.join("manifest.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("summary.json"), "{}", stdout(&o));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(
        dir.path(),
        "t.cfg",
        "T = 1\nh = 0.01\nN = 500\nseed = 9\nsystem = langevin\ninit.std = 1\n",
    );
    let mut digests = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("out{threads}"));
        let o = ksde(&[
            "simulate",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        digests.push(fs::read(out.join("snapshot.bin")).unwrap());
    }
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn out_directory_defaults_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "z.cfg", "T = 0.2\nh = 0.1\nN = 5\n");
    let out = dir.path().join("from_env");
    let o = Command::new(env!("CARGO_BIN_EXE_ksde"))
        .args(["simulate", cfg.to_str().unwrap()])
        .env("KSDE_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("manifest.json").exists());
}
