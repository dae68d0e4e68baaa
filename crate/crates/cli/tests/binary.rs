use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn frac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_frac")).args(args).env_remove("FRAC_THREADS").output().unwrap()
}

fn canonical(path: &Path) -> String {
    let mut v: Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("timing");
    serde_json::to_string(&v).unwrap()
}

#[test]
fn geometry_k_at_one_half_is_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("k.json");
    let o = frac(&["geometry", "--estimate", "K", "--s", "0.5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("name,s,raw,estimate,samples"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let raw: f64 = row[2].parse().unwrap();
    assert!((raw - 2.0).abs() < 1e-3, "K = {raw}");
}

#[test]
fn same_seed_gives_identical_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h.json");
    let args = ["harnack", "--s", "0.6", "--trials", "2", "--seed", "9", "--out", out.to_str().unwrap()];
    assert!(frac(&args).status.success());
    let first = canonical(&out);
    assert!(frac(&args).status.success());
    assert_eq!(first, canonical(&out));
}

#[test]
fn missing_output_directory_is_created() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x/y/z/cover.json");
    let o = frac(&["cover", "--set", "points=20", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.exists() && out.with_extension("csv").exists());
    let leftovers = std::fs::read_dir(out.parent().unwrap()).unwrap().count();
    assert_eq!(leftovers, 2);
}

#[test]
fn validation_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a.json");
    let o = frac(&["apply", "--s", "1.0", "--set", "bogus=1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("`s`") && err.contains("`bogus`"), "{err}");
    assert!(!out.exists());
}

#[test]
fn config_file_command_must_match() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "command = \"solve\"\n").unwrap();
    let o = frac(&["apply", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("b.json");
    let o = frac(&["barrier", "--case", "2", "--s", "0.99", "--set", "radius=0.04", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_and_flags_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, "command = \"solve\"\nnodes = 17\ns = 0.2\n").unwrap();
    let out = dir.path().join("s.json");
    let o = frac(&["solve", "--config", cfg.to_str().unwrap(), "--s", "0.8", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["config"]["s"], 0.8);
    assert_eq!(v["config"]["nodes"], 17);
    assert_eq!(v["rows"].as_array().unwrap().len(), 17);
}
