use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nalgebra::DMatrix;
use serde_json::Value;
use stable_ssm::infer::KernelConfig;
use stable_ssm::param::{Dims, ModelDocument, Ssm};
use stable_ssm_cli::{Preset, RunConfig};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stable-ssm"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).env_remove("STABLE_SSM_THREADS").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

/// `(2, 1, 1)` run sized for a few seconds.
fn small_config() -> RunConfig {
    let mut c = RunConfig::preset(Preset::Desk).with_dims(Dims { n: 2, l: 1, q: 1 }).unwrap();
    c.simulation.t_inference = 0.5;
    c.simulation.extrapolation_factor = 1.0;
    c.simulation.record_every = 50;
    c.dataset.realizations = 3;
    c.dataset.measurements = 10;
    c.inference.kernel = KernelConfig::Rwm { scale: 0.05, warmup: 20, target_accept: 0.234 };
    c.inference.iterations = 60;
    c.inference.keep_last = 5;
    c.inference.paths_per_draw = 4;
    c.inference.init_candidates = 4;
    c.inference.burn_in = None;
    c.consistency = None;
    c.resolve().unwrap()
}

fn write_config(dir: &Path, c: &RunConfig) -> PathBuf {
    let p = dir.join("run.json");
    fs::write(&p, serde_json::to_string_pretty(c).unwrap()).unwrap();
    p
}

fn write_model(dir: &Path, name: &str, s: Ssm) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, ModelDocument::new(s, None, None, None).to_json().unwrap()).unwrap();
    p
}

/// Noise-free `(2, 1, 1)` model.
fn deterministic_model() -> Ssm {
    let a = DMatrix::from_row_slice(2, 2, &[-1.0, 0.5, -0.3, -2.0]);
    let b = DMatrix::from_row_slice(2, 1, &[1.0, 0.5]);
    let c = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
    let d = DMatrix::from_element(1, 1, 0.2);
    Ssm::new(a, b, c, d, DMatrix::zeros(2, 2), DMatrix::zeros(2, 1), 0.0).unwrap()
}

/// `(t, channel, stat) -> value` of a long-format CSV.
fn long_csv(path: &Path) -> Vec<(f64, usize, String, f64)> {
    let s = fs::read_to_string(path).unwrap();
    let mut lines = s.lines();
    assert_eq!(lines.next(), Some("t,channel,stat,value"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].to_string(), f[3].parse().unwrap())
        })
        .collect()
}

fn series(rows: &[(f64, usize, String, f64)], stat: &str, channel: usize) -> Vec<(f64, f64)> {
    rows.iter().filter(|r| r.2 == stat && r.1 == channel).map(|r| (r.0, r.3)).collect()
}

fn dir_bytes(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn sampled_models_verify_and_repeat_byte_for_byte() {
    let t = TempDir::new().unwrap();
    for out in ["a", "b"] {
        let o = run(&["sample", "--count", "3", "--seed", "9", "--out", out], t.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = dir_bytes(&t.path().join("a"));
    assert_eq!(a, dir_bytes(&t.path().join("b")));
    assert_eq!(a.len(), 5);
    let summary = fs::read_to_string(t.path().join("a/summary.csv")).unwrap();
    assert!(summary.starts_with("index,brl_max_eig,spectral_abscissa,ms_abscissa,a_frobenius"));
    assert_eq!(summary.lines().filter(|l| l.ends_with(",true")).count(), 3);
    let o = run(&["verify", "a/model_00000.json"], t.path());
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["brl_max_eig"].as_f64().unwrap() < 0.0);
    assert!(report["lyapunov_residual"].as_f64().unwrap() < 1e-9);
}

#[test]
fn flipped_drift_fails_verification() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(&["sample", "--out", "s"], t.path())), 0);
    let path = t.path().join("s/model_00000.json");
    let mut doc: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    for row in doc["A"].as_array_mut().unwrap() {
        for v in row.as_array_mut().unwrap() {
            *v = Value::from(-v.as_f64().unwrap());
        }
    }
    fs::write(t.path().join("flipped.json"), doc.to_string()).unwrap();
    let o = run(&["verify", "flipped.json"], t.path());
    assert_eq!(code(&o), 4);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["ms_stable"], Value::Bool(false));
}

#[test]
fn verify_without_certificate_checks_internal_stability_only() {
    let t = TempDir::new().unwrap();
    write_model(t.path(), "m.json", deterministic_model());
    let o = run(&["verify", "m.json"], t.path());
    assert_eq!(code(&o), 0);
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["certificate"], "none");
    assert!(report.get("lyapunov_max_eig").is_none() && report.get("brl_max_eig").is_none());
    assert_eq!(code(&run(&["verify", "m.json", "--gamma", "3"], t.path())), 2);
}

#[test]
fn external_certificate_file_is_used() {
    let t = TempDir::new().unwrap();
    write_model(t.path(), "m.json", deterministic_model());
    fs::write(t.path().join("p.json"), "[[1.0, 0.0], [0.0, 1.0]]").unwrap();
    let o = run(&["verify", "m.json", "--certificate", "p.json"], t.path());
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report.get("lyapunov_max_eig").is_some());
    assert_eq!(report["certificate"], "p.json");
    fs::write(t.path().join("bad.json"), "[[1.0, 0.0], [0.0, -1.0]]").unwrap();
    assert_eq!(code(&run(&["verify", "m.json", "--certificate", "bad.json"], t.path())), 2);
}

#[test]
fn malformed_inputs_exit_2() {
    let t = TempDir::new().unwrap();
    fs::write(t.path().join("broken.json"), "{").unwrap();
    assert_eq!(code(&run(&["verify", "broken.json"], t.path())), 2);
    let mut v = serde_json::to_value(small_config()).unwrap();
    v["dataset"]["extra"] = Value::from(1);
    fs::write(t.path().join("cfg.json"), v.to_string()).unwrap();
    assert_eq!(code(&run(&["--config", "cfg.json", "sample"], t.path())), 2);
    assert_eq!(code(&run(&["infer", "--out", "i"], t.path())), 2);
}

#[test]
fn echoed_config_is_idempotent() {
    let t = TempDir::new().unwrap();
    let o = run(&["config", "--preset", "paper", "--seed", "4"], t.path());
    assert_eq!(code(&o), 0);
    fs::write(t.path().join("echo.json"), &o.stdout).unwrap();
    let again = run(&["--config", "echo.json", "config"], t.path());
    assert_eq!(o.stdout, again.stdout);
    let cfg: RunConfig = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(cfg.seed, 4);
    assert_eq!(cfg.inference.kernel, KernelConfig::Hmc { step_size: 0.01, n_leapfrog: 3, gradient: stable_ssm::infer::GradientMode::Supplied });
    assert_eq!(cfg.dims, Dims { n: 4, l: 2, q: 1 });
    assert_eq!(cfg.dataset.realizations, 10);
}

#[test]
fn noise_free_simulation_tracks_the_moment_mean() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(t.path(), &small_config());
    write_model(t.path(), "m.json", deterministic_model());
    let cfg = cfg.to_str().unwrap();
    assert_eq!(code(&run(&["--config", cfg, "--out", "sim", "--count", "1", "simulate", "m.json"], t.path())), 0);
    assert_eq!(code(&run(&["--config", cfg, "--out", "mom", "moments", "m.json"], t.path())), 0);
    let path = series(&long_csv(&t.path().join("sim/paths/path_000.csv")), "y", 0);
    let mean = series(&long_csv(&t.path().join("mom/moments.csv")), "mean", 0);
    let var = series(&long_csv(&t.path().join("mom/moments.csv")), "var", 0);
    assert_eq!(path.len(), mean.len());
    // Euler against RK4: first order in dt = 1e-3.
    for ((tp, y), (tm, m)) in path.iter().zip(&mean) {
        assert_eq!(tp, tm);
        assert!((y - m).abs() < 2e-3, "t = {tp}: {y} vs {m}");
    }
    assert!(var.iter().all(|(_, v)| v.abs() < 1e-12));
}

#[test]
fn zero_noise_dataset_equals_noiseless_outputs() {
    let t = TempDir::new().unwrap();
    let mut c = small_config();
    c.dataset.sigma = 0.0;
    let cfg = write_config(t.path(), &c);
    let cfg = cfg.to_str().unwrap();
    write_model(t.path(), "m.json", deterministic_model());
    assert_eq!(code(&run(&["--config", cfg, "--out", "sim", "--count", "1", "simulate", "m.json"], t.path())), 0);
    assert_eq!(code(&run(&["--config", cfg, "--out", "data", "make-data", "m.json"], t.path())), 0);
    let path = series(&long_csv(&t.path().join("sim/paths/path_000.csv")), "y", 0);
    for k in 0..3 {
        let ys = series(&long_csv(&t.path().join(format!("data/realizations/realization_{k:02}.csv"))), "y", 0);
        assert_eq!(ys.len(), 10);
        for (tm, y) in ys {
            let (_, truth) = path.iter().find(|(tp, _)| (tp - tm).abs() < 1e-12).unwrap();
            assert!((y - truth).abs() < 1e-12);
        }
    }
    let ds: Value = serde_json::from_str(&fs::read_to_string(t.path().join("data/dataset.json")).unwrap()).unwrap();
    assert_eq!(ds["seed"]["seed"], Value::from(c.seed));
}

#[test]
fn desk_dataset_has_one_file_per_realization() {
    let t = TempDir::new().unwrap();
    assert_eq!(code(&run(&["sample", "--out", "s"], t.path())), 0);
    let o = run(&["make-data", "s/model_00000.json", "--out", "d"], t.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read_dir(t.path().join("d/realizations")).unwrap().count(), 10);
    assert!(t.path().join("d/config.json").exists());
}

#[test]
fn diverging_model_exits_5() {
    let t = TempDir::new().unwrap();
    let c = RunConfig::preset(Preset::Desk).with_dims(Dims { n: 1, l: 1, q: 1 }).unwrap();
    let cfg = write_config(t.path(), &c);
    let m = |v: f64| DMatrix::from_element(1, 1, v);
    write_model(t.path(), "m.json", Ssm::new(m(1e6), m(1.0), m(1.0), m(0.0), m(0.0), m(0.0), 0.0).unwrap());
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", "o", "simulate", "m.json"], t.path());
    assert_eq!(code(&o), 5);
}

#[test]
fn thread_count_does_not_change_outputs() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(t.path(), &small_config());
    assert_eq!(code(&run(&["sample", "--out", "s", "--config", cfg.to_str().unwrap()], t.path())), 0);
    for (threads, out) in [("1", "one"), ("3", "three")] {
        let o = bin()
            .args(["--config", cfg.to_str().unwrap(), "--out", out, "--count", "4", "simulate", "s/model_00000.json"])
            .env("STABLE_SSM_THREADS", threads)
            .current_dir(t.path())
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(dir_bytes(&t.path().join("one")), dir_bytes(&t.path().join("three")));
}

#[test]
fn prior_only_and_data_runs_are_reproducible() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(t.path(), &small_config());
    let cfg = cfg.to_str().unwrap();
    for out in ["p1", "p2"] {
        let o = run(&["--config", cfg, "--out", out, "infer", "--prior-only"], t.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(dir_bytes(&t.path().join("p1")), dir_bytes(&t.path().join("p2")));
    for f in ["chain.csv", "chain_meta.json", "diagnostics.json", "summary.json", "predictive_inference.csv", "predictive_extrapolation.csv"] {
        assert!(t.path().join("p1").join(f).exists(), "{f}");
    }
    let chain = fs::read_to_string(t.path().join("p1/chain.csv")).unwrap();
    assert_eq!(chain.lines().count(), 61);
    assert!(chain.starts_with("iteration,log_post,p_log_diag[0]"));
    let pred = long_csv(&t.path().join("p1/predictive_extrapolation.csv"));
    assert!(pred.iter().all(|r| r.0 >= 0.5 - 1e-12));

    assert_eq!(code(&run(&["--config", cfg, "--out", "s", "sample"], t.path())), 0);
    assert_eq!(code(&run(&["--config", cfg, "--out", "d", "make-data", "s/model_00000.json"], t.path())), 0);
    for mode in [None, Some("--baseline")] {
        let mut args = vec!["--config", cfg, "--out", "post", "infer", "d/dataset.json"];
        args.extend(mode);
        let o = run(&args, t.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let summary: Value = serde_json::from_str(&fs::read_to_string(t.path().join("post/summary.json")).unwrap()).unwrap();
        assert_eq!(summary["prior_only"], Value::Bool(false));
        assert_eq!(summary["t_inference"], Value::from(0.5));
    }
}

#[test]
fn dataset_dims_must_match_config() {
    let t = TempDir::new().unwrap();
    let cfg = write_config(t.path(), &small_config());
    write_model(t.path(), "m.json", deterministic_model());
    assert_eq!(code(&run(&["--config", cfg.to_str().unwrap(), "--out", "d", "make-data", "m.json"], t.path())), 0);
    assert_eq!(code(&run(&["--out", "i", "infer", "d/dataset.json"], t.path())), 2);
}

#[test]
fn zero_acceptance_exits_6() {
    let t = TempDir::new().unwrap();
    let mut c = small_config();
    c.inference.kernel = KernelConfig::Rwm { scale: 1e8, warmup: 0, target_accept: 0.234 };
    c.inference.iterations = 10;
    c.inference.keep_last = 5;
    c.inference.burn_in = None;
    let cfg = write_config(t.path(), &c.resolve().unwrap());
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", "z", "infer", "--prior-only"], t.path());
    assert_eq!(code(&o), 6);
    assert!(t.path().join("z/chain.csv").exists());
}
