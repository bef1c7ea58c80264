use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn shipped() -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/baseline.json");
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Two grid points, two seeds and budgets small enough for a test run.
fn small() -> Value {
    let mut v = shipped();
    v["dt_grid"] = json!({"explicit": [0.1, 0.05]});
    let mut preset = v["learner"]["presets"]["0"].clone();
    preset["step_budget"] = json!(20_000);
    v["learner"]["presets"] = json!({"0": preset.clone(), "1": preset});
    v["nash_q"]["config"]["step_budget"] = json!(5_000);
    v["seeds"]["labels"] = json!([0, 1]);
    v
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn hfmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfmm")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file except the manifest, which records wall-clock timings.
fn artifacts(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "manifest.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn malformed_config_exits_2_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, "{ \"schema_version\": 1, ").unwrap();
    let out = tmp.path().join("out");
    let r = hfmm(&["--out", s(&out), "solve", "--config", s(&cfg), "--dt", "0.1"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_key_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = small();
    v["model"]["colour"] = json!("blue");
    let cfg = write_config(tmp.path(), &v);
    let out = tmp.path().join("out");
    let r = hfmm(&["--out", s(&out), "game", "sweep", "--config", s(&cfg)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn missing_config_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let r = hfmm(&["--out", s(&out), "sweep", "--config", s(&tmp.path().join("nope.json"))]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn step_too_coarse_for_the_rates_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let out = tmp.path().join("out");
    let r = hfmm(&["--out", s(&out), "solve", "--config", s(&cfg), "--dt", "0.5"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
    let r = hfmm(&["--out", s(&out), "solve", "--config", s(&cfg), "--dt", "-1"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn zero_jobs_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let out = tmp.path().join("out");
    let r = hfmm(&["--out", s(&out), "sweep", "--config", s(&cfg), "--jobs", "0"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn solver_failure_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = small();
    v["solver"]["max_iter"] = json!(3);
    let cfg = write_config(tmp.path(), &v);
    let out = tmp.path().join("out");
    let r = hfmm(&["--out", s(&out), "solve", "--config", s(&cfg), "--dt", "0.1"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("error"));
}

#[test]
fn solve_is_reproducible_and_honours_the_format() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let r = hfmm(&["--out", s(dir), "--format", "json", "--plot", "solve", "--config", s(&cfg), "--dt", "0.05"]);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let files = artifacts(&a);
    assert!(files.contains_key("solve.json"));
    assert!(!files.contains_key("solve.csv"));
    assert_eq!(files, artifacts(&b));

    let manifest: Value = serde_json::from_slice(&fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "solve");
    let listed: Vec<&str> = manifest["artifacts"].as_array().unwrap().iter().map(|x| x["file"].as_str().unwrap()).collect();
    assert_eq!(listed.len(), files.len());
    for f in listed {
        assert!(files.contains_key(f));
    }
}

#[test]
fn sweep_is_reproducible_across_job_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for (dir, jobs) in [(&a, "1"), (&b, "3")] {
        let r = hfmm(&["--out", s(dir), "--seed", "77", "sweep", "--config", s(&cfg), "--jobs", jobs, "--seeds", "4", "9"]);
        assert_eq!(r.status.code(), Some(0), "{}", String::from_utf8_lossy(&r.stderr));
    }
    let files = artifacts(&a);
    for name in ["convergence.csv", "sample_complexity.csv", "sample_complexity_median.csv", "learning_curves.csv"] {
        assert!(files.contains_key(name), "{name} missing");
    }
    assert_eq!(files, artifacts(&b));
    let sc = String::from_utf8(files["sample_complexity.csv"].clone()).unwrap();
    // header plus two grid points times two seeds
    assert_eq!(sc.lines().count(), 5);

    // a different master seed changes the learning runs
    let c = tmp.path().join("c");
    let r = hfmm(&["--out", s(&c), "--seed", "78", "sweep", "--config", s(&cfg), "--seeds", "4", "9"]);
    assert_eq!(r.status.code(), Some(0));
    assert_ne!(artifacts(&c)["learning_curves.csv"], files["learning_curves.csv"]);
    assert_eq!(artifacts(&c)["convergence.csv"], files["convergence.csv"]);
}

#[test]
fn game_commands_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small());
    let runs: [(&[&str], &[&str]); 3] = [
        (&["game", "solve"], &["game_solution.csv", "game_equilibria.csv"]),
        (&["game", "sweep"], &["game_solution.csv", "game_residuals.csv"]),
        (&["game", "nashq"], &["nashq_curves.csv", "nashq_final.csv"]),
    ];
    for (i, (cmd, expected)) in runs.iter().enumerate() {
        let out = tmp.path().join(format!("g{i}"));
        let mut args = vec!["--out", s(&out)];
        args.extend_from_slice(cmd);
        args.extend_from_slice(&["--config", s(&cfg)]);
        let r = hfmm(&args);
        assert_eq!(r.status.code(), Some(0), "{cmd:?}: {}", String::from_utf8_lossy(&r.stderr));
        let files = artifacts(&out);
        for f in *expected {
            assert!(files.contains_key(*f), "{cmd:?} did not write {f}");
        }
    }
}
