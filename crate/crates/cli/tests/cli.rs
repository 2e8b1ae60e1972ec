use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scldgm"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p
}

const SMALL_DDE: &str = r#"{
  "version": 1,
  "inner": {"kind": "ldgm_inner", "regular": [7, 7]},
  "outer": {"kind": "ldgm_outer", "regular": [4, 200]},
  "sweep": {"eb_no_db": [0.5, 1.0, 1.5]},
  "dde": {"n_bits": 8, "max_iters": 40},
  "traces": true
}"#;

#[test]
fn dde_output_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "dde.json", SMALL_DDE);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let first = run(&["dde"], &cfg, &a);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let second = run(&["dde", "--jobs", "1"], &cfg, &b);
    assert_eq!(second.status.code(), Some(0));
    for f in ["dde.csv", "trace_000.csv", "trace_002.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let csv = fs::read_to_string(a.join("dde.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("eb_no_db,sigma,inner_error,overall_error"));
    assert_eq!(lines.count(), 3);
    assert_eq!(first.stdout, second.stdout);
}

#[test]
fn config_errors_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");

    let typo = SMALL_DDE.replace("\"traces\"", "\"tracez\"");
    let o = run(&["dde"], &write_config(&dir, "typo.json", &typo), &out);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("unknown field") && err.contains("line 7"), "{err}");

    let empty = SMALL_DDE.replace("[0.5, 1.0, 1.5]", "[]");
    let o = run(&["dde"], &write_config(&dir, "empty.json", &empty), &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sweep is empty"));

    let version = SMALL_DDE.replace("\"version\": 1", "\"version\": 7");
    let o = run(&["dde"], &write_config(&dir, "version.json", &version), &out);
    assert_eq!(o.status.code(), Some(2));

    let wrong_kind = SMALL_DDE.replace("\"ldgm_outer\"", "\"ldgm_inner\"");
    let o = run(&["dde"], &write_config(&dir, "kind.json", &wrong_kind), &out);
    assert_eq!(o.status.code(), Some(2));

    let o = run(&["dde"], &dir.path().join("missing.json"), &out);
    assert_eq!(o.status.code(), Some(2));

    let bad_grid = SMALL_DDE.replace("\"n_bits\": 8", "\"n_bits\": 0");
    let o = run(&["dde"], &write_config(&dir, "grid.json", &bad_grid), &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.join("dde.csv").exists());
}

#[test]
fn optimize_recovers_regular_code_and_feeds_other_commands() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("opt");
    let cfg = write_config(
        &dir,
        "opt.json",
        r#"{
  "version": 1,
  "search": {"degrees": [7], "population": 4, "patience": 3, "critical_ber": 3.848e-3, "precision_db": 0.02}
}"#,
    );
    let o = run(&["optimize"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let result: serde_json::Value = serde_json::from_slice(&fs::read(out.join("result.json")).unwrap()).unwrap();
    let th = result["threshold_eb_no_db"].as_f64().unwrap();
    assert!((th - 0.68).abs() <= 0.05, "threshold {th}");
    assert!(out.join("checkpoint.json").exists());
    assert!(fs::read_to_string(out.join("levels.csv")).unwrap().starts_with("level,eb_no_db,feasible"));

    // The optimized pair is usable by file reference.
    let conv = write_config(
        &dir,
        "conv.json",
        r#"{
  "version": 1,
  "inner": "opt/inner.json",
  "outer": {"kind": "ldgm_outer", "regular": [4, 200]},
  "critical_ber": 3.848e-3,
  "sweep": {"range": {"start": 0.8, "stop": 1.2, "step": 0.2}},
  "dde": {"n_bits": 9}
}"#,
    );
    let o = run(&["convergence"], &conv, &dir.path().join("conv"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("conv/convergence.csv")).unwrap();
    let iters: Vec<usize> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(iters.len(), 3);
    assert!(iters.windows(2).all(|w| w[1] <= w[0]), "{iters:?}");
}

#[test]
fn computation_errors_exit_with_three() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "opt.json",
        r#"{
  "version": 1,
  "search": {"degrees": [7], "population": 4, "patience": 1, "critical_ber": 3.848e-3,
             "start_db": 0.2, "confirmation": {"n_bits": 8, "iterations": 20}}
}"#,
    );
    let o = run(&["optimize"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("search failed"));
}

#[test]
fn simulation_is_seeded() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "sim.json",
        r#"{
  "version": 1,
  "codes": [{"name": "C", "inner": {"kind": "ldgm_inner", "regular": [7, 7]},
             "outer": {"kind": "ldgm_outer", "regular": [4, 200]}, "k": 400, "graph_seed": 3}],
  "sweep": {"eb_no_db": [0.0, 1.0]},
  "schedules": ["two_step", "joint"],
  "max_blocks": 6,
  "batch": 4,
  "seed": 9
}"#,
    );
    let read = |d: &str| fs::read(dir.path().join(d).join("simulate.csv")).unwrap();
    assert!(run(&["simulate"], &cfg, &dir.path().join("a")).status.success());
    assert!(run(&["simulate", "--jobs", "1"], &cfg, &dir.path().join("b")).status.success());
    assert!(run(&["simulate", "--seed", "10"], &cfg, &dir.path().join("c")).status.success());
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
    let csv = String::from_utf8(read("a")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.lines().nth(3).unwrap().starts_with("C,joint,0.0000000000000000e0,"));
}

#[test]
fn bounds_sit_below_dde() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "bounds.json",
        r#"{
  "version": 1,
  "ensembles": [{"name": "ldgm77", "inner": {"kind": "ldgm_inner", "regular": [7, 7]}}],
  "sweep": {"range": {"start": 1.0, "stop": 4.0, "step": 1.0}},
  "dde": {"n_bits": 9, "max_iters": 100}
}"#,
    );
    let out = dir.path().join("b");
    let o = run(&["bounds"], &cfg, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("bounds.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("name,eb_no_db,sigma,dde_ber,bound_ber"));
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        let sigma = (1.0 / (2.0 * 0.5 * 10f64.powf(f[0] / 10.0))).sqrt();
        assert!((f[1] - sigma).abs() < 1e-12);
        assert!(f[2] >= f[3], "{line}");
    }
}

#[test]
fn inline_irregular_ensembles_parse() {
    let dir = TempDir::new().unwrap();
    let body = r#"{
  "version": 1,
  "inner": {"kind": "ldgm_inner", "rate": 0.5,
            "vn": {"perspective": "node", "terms": {"6": 0.2063, "7": 0.7472, "100": 0.0465}}},
  "outer": {"kind": "ldgm_outer", "regular": [4, 200]},
  "critical_ber": 3.848e-3,
  "sweep": {"eb_no_db": [1.0]},
  "dde": {"n_bits": 8}
}"#;
    let o = run(&["convergence"], &write_config(&dir, "c.json", body), &dir.path().join("a"));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let typo = body.replace("\"perspective\"", "\"perspectiv\"");
    let o = run(&["convergence"], &write_config(&dir, "t.json", &typo), &dir.path().join("b"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("perspectiv"));
}
