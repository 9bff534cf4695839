//! The `divcps` binary: validation reports, artifacts and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_divcps"))
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("config.toml");
    std::fs::write(&p, text).unwrap();
    p
}

fn json_line(bytes: &[u8]) -> Value {
    let text = String::from_utf8_lossy(bytes);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 1, "expected one line, got {text:?}");
    serde_json::from_str(lines[0]).unwrap()
}

fn validate(text: &str) -> (i32, Value) {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("validate").arg("--config").arg(write_config(dir.path(), text)).output().unwrap();
    (out.status.code().unwrap(), json_line(&out.stdout))
}

fn run(text: &str, out_dir: &Path, envs: &[(&str, &str)]) -> Output {
    let cfg_dir = tempfile::tempdir().unwrap();
    let mut cmd = bin();
    cmd.arg("run")
        .arg("--config")
        .arg(write_config(cfg_dir.path(), text))
        .arg("--out")
        .arg(out_dir);
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

const FERNHOLZ: &str = r#"
kind = "diversity"
[model]
type = "fernholz"
n = 3
delta = 0.3
g = [0.02, 0.02, 0.02]
m = 1.0
sigma = 0.2
[grid]
horizon = 1.0
steps = 128
[monte_carlo]
paths = 40
seed = 12
"#;

#[test]
fn well_formed_fernholz_validates() {
    let (code, v) = validate(FERNHOLZ);
    assert_eq!(code, 0);
    assert_eq!(v["valid"], true);
    assert_eq!(v["violations"].as_array().unwrap().len(), 0);
}

#[test]
fn empty_region_is_reported() {
    let text = FERNHOLZ.replace("n = 3", "n = 2").replace("delta = 0.3", "delta = 0.5").replace("[0.02, 0.02, 0.02]", "[0.02, 0.02]");
    let (code, v) = validate(&text);
    assert_eq!(code, 2);
    let list = v["violations"].as_array().unwrap();
    assert!(list.iter().any(|m| m.as_str().unwrap().contains("O(delta) empty")), "{list:?}");
}

#[test]
fn bessel_dimension_is_reported() {
    let text = r#"
kind = "bessel"
[model]
type = "custom-constant-vol"
n = 2
sigma_matrix = [[1.0, 0.0], [0.0, 1.0]]
[grid]
horizon = 1.0
steps = 16
[monte_carlo]
paths = 1
seed = 0
[bessel]
delta_b = 1.0
"#;
    let (code, v) = validate(text);
    assert_eq!(code, 2);
    assert_eq!(v["violations"][0], "bessel: delta_B < dC/c = 2");
}

#[test]
fn constant_dynamics_write_constant_series() {
    let text = r#"
kind = "simulate"
[model]
type = "custom-constant-vol"
n = 2
sigma = 0.0
gamma = [0.0, 0.0]
s0 = [1.5, 0.5]
[grid]
horizon = 2.0
steps = 10
[monte_carlo]
paths = 3
seed = 0
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run(text, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0));
    let mut r = csv::Reader::from_path(dir.path().join("results.csv")).unwrap();
    assert_eq!(r.headers().unwrap(), vec!["path_id", "t", "series", "value"]);
    let mut count = 0;
    for rec in r.records() {
        let rec = rec.unwrap();
        let want = if &rec[2] == "S1" { 1.5 } else { 0.5 };
        assert_eq!(rec[3].parse::<f64>().unwrap(), want);
        count += 1;
    }
    assert_eq!(count, 3 * 11 * 2);
    let summary: Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema_version"], 1);
    assert_eq!(summary["kind"], "simulate");
}

#[test]
fn arctan_tree_is_certified() {
    let text = r#"
kind = "cps"
[model]
type = "arctan"
delta = 0.15
[grid]
horizon = 1.0
steps = 512
[monte_carlo]
paths = 1
seed = 21
[cps]
eta = 0.01
depth = 2
branching = 6
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run(text, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["results"]["certificate"]["status"], "certified");
    let cert = std::fs::read_to_string(dir.path().join("certificate.txt")).unwrap();
    assert!(cert.contains("certificate_version = 1"));
}

#[test]
fn failed_certificate_exits_4_and_keeps_outputs() {
    let text = r#"
kind = "cps"
[model]
type = "arctan"
delta = 0.15
[grid]
horizon = 1.0
steps = 8
[monte_carlo]
paths = 1
seed = 3
[cps]
eta = 0.01
depth = 1
branching = 4
stopping = "grid-index"
"#;
    let dir = tempfile::tempdir().unwrap();
    let out = run(text, dir.path(), &[]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["results"]["certificate"]["status"], "failed");
    assert!(dir.path().join("certificate.txt").exists());
}

#[test]
fn rare_acceptance_exits_3_without_outputs() {
    let text = r#"
kind = "conditioned"
[model]
type = "conditioned"
n = 2
delta = 0.45
sigma = 0.5
max_attempts = 1
[grid]
horizon = 1.0
steps = 64
[monte_carlo]
paths = 20
seed = 0
"#;
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("out");
    let out = run(text, &out_dir, &[]);
    assert_eq!(out.status.code(), Some(3));
    let err = json_line(&out.stderr);
    assert_eq!(err["error"], "acceptance_too_rare");
    let left = std::fs::read_dir(&out_dir).map(|d| d.count()).unwrap_or(0);
    assert_eq!(left, 0);
}

#[test]
fn invalid_config_exits_2_with_one_json_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&FERNHOLZ.replace("steps = 128", "steps = 0"), dir.path(), &[]);
    assert_eq!(out.status.code(), Some(2));
    let err = json_line(&out.stderr);
    assert_eq!(err["error"], "validation");
    assert!(!dir.path().join("results.csv").exists());
}

#[test]
fn output_is_identical_across_runs_and_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(run(FERNHOLZ, a.path(), &[("DIVCPS_THREADS", "1")]).status.code(), Some(0));
    assert_eq!(run(FERNHOLZ, b.path(), &[("DIVCPS_THREADS", "3")]).status.code(), Some(0));
    for f in ["results.csv", "summary.json"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let cfg_dir = tempfile::tempdir().unwrap();
    let cfg = write_config(cfg_dir.path(), FERNHOLZ);
    for (d, seed) in dirs.iter().zip(["12", "13", "12"]) {
        let st = bin().args(["run", "--seed", seed, "--config"]).arg(&cfg).arg("--out").arg(d.path()).status().unwrap();
        assert!(st.success());
    }
    let csv = |d: &tempfile::TempDir| std::fs::read(d.path().join("results.csv")).unwrap();
    assert_ne!(csv(&dirs[0]), csv(&dirs[1]));
    assert_eq!(csv(&dirs[0]), csv(&dirs[2]));
}
