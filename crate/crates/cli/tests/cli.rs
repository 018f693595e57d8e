use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spinkernel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinkernel")).args(args).output().unwrap()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn listed(dir: &Path) -> Vec<String> {
    manifest(dir)["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap().to_string()).collect()
}

#[test]
fn scan_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = spinkernel(&["scan", "--preset", "ising", "--sizes", "12,16", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("N=12 argmin") && text.contains("N=16 argmin"));
    assert_eq!(listed(dir.path()), ["scan.csv"]);
    let csv = fs::read_to_string(dir.path().join("scan.csv")).unwrap();
    assert!(csv.starts_with("# spinkernel-csv v1\n# config-hash: "));
    assert!(dir.path().join("run.log").exists());
}

#[test]
fn each_command_lists_its_own_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let cases: [(&str, &[&str]); 4] = [
        ("gram", &["gram-N12.csv", "gram-N12.json"]),
        ("sample", &["gram-sampled-N12.csv", "gram-sampled-N12.json"]),
        ("train", &["svm-N12.json"]),
        ("bounds", &["bounds.csv", "histogram.csv"]),
    ];
    for (cmd, files) in cases {
        let o = spinkernel(&[cmd, "--sizes", "12", "--shots", "1000", "--out", out]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(listed(dir.path()), files, "{cmd}");
    }
    let o = spinkernel(&["boundary", "--preset", "xy", "--sizes", "12", "--out", out]);
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("N=12 boundary 0.9"));
    let files = listed(dir.path());
    assert!(files.contains(&"boundary.csv".to_string()) && files.contains(&"decision-N12.csv".to_string()));
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"preset": "xy", "sizes": [10], "per_side": 4, "seed": 3}"#).unwrap();
    let out = dir.path().join("out");
    let o = spinkernel(&["train", "--config", cfg.to_str().unwrap(), "--seed", "9", "--kind", "per-site", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(manifest(&out)["seed"], 9);
    let model: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("svm-N10.json")).unwrap()).unwrap();
    assert_eq!(model["seed"], 9);
    assert_eq!(model["points"].as_array().unwrap().len(), 8);
    assert_eq!(model["points"][0]["gamma"], 0.5);
}

#[test]
fn identical_runs_are_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = spinkernel(&["pipeline", "--preset", "xy", "--sizes", "16,24,32", "--shots", "2000", "--seed", "5", "--out", d.path().to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in listed(a.path()) {
        assert_eq!(fs::read(a.path().join(&f)).unwrap(), fs::read(b.path().join(&f)).unwrap(), "{f}");
    }
    assert_eq!(fs::read(a.path().join("manifest.json")).unwrap(), fs::read(b.path().join("manifest.json")).unwrap());
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"preset": "ising", "left_window": [0.7, 1.2]}"#).unwrap();
    let o = spinkernel(&["scan", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("disjoint"));

    let o = spinkernel(&["sample", "--sizes", "12", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("shots"));

    assert_eq!(spinkernel(&["scan", "--config", "/nonexistent.json"]).status.code(), Some(2));
    assert_eq!(spinkernel(&["scan", "--engine", "quantum"]).status.code(), Some(2));
    let o = spinkernel(&["scan", "--engine", "ed", "--sizes", "40", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    fs::write(&cfg, r#"{"preset": "ising", "sizes": [10], "engine": "ed", "ed": {"max_iter": 2}}"#).unwrap();
    let o = spinkernel(&["scan", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage scan"));
}
