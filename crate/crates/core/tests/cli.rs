use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(rel)
}

fn camsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_camsim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate_mann(out: &Path, extra: &[&str]) -> Output {
    let cfg = fixture("mann/config.json");
    let stored = fixture("mann/stored.csv");
    let query = fixture("mann/query.csv");
    let labels = fixture("mann/labels.txt");
    let mut args = vec![
        "simulate",
        "--config",
        p(&cfg),
        "--stored",
        p(&stored),
        "--query",
        p(&query),
        "--labels",
        p(&labels),
        "--out",
        p(out),
    ];
    args.extend_from_slice(extra);
    camsim(&args)
}

#[test]
fn mann_report_without_cost_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let o = simulate_mann(&out, &[]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["architecture"]["subarrays_total"], 8);
    assert_eq!(report["results"].as_array().unwrap().len(), 20);
    let acc = report["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert!(report.get("performance").is_none());
}

#[test]
fn mann_report_with_cost_model() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    let cm = fixture("mann/cost_model.json");
    let o = simulate_mann(&out, &["--cost-model", p(&cm)]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let search = &report["performance"]["search"];
    let (lat, en) = (
        search["latency"].as_f64().unwrap(),
        search["energy"].as_f64().unwrap(),
    );
    assert!(lat > 0.0 && en > 0.0);
    assert_eq!(search["edp"].as_f64().unwrap(), lat * en);
    assert_eq!(report["performance"]["write"]["queries"], 1);
}

#[test]
fn reports_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    assert_eq!(simulate_mann(&a, &["--seed", "3"]).status.code(), Some(0));
    assert_eq!(simulate_mann(&b, &["--seed", "3"]).status.code(), Some(0));
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn missing_cost_key_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.json");
    // The toy model only knows comparators and registers; MANN needs voters.
    let cm = fixture("toy_cost_model.json");
    let o = simulate_mann(&out, &["--cost-model", p(&cm)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("voter"));
    assert!(!out.exists());
}

#[test]
fn invalid_config_exits_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc: Value =
        serde_json::from_str(&fs::read_to_string(fixture("mann/config.json")).unwrap()).unwrap();
    doc["circuit"]["cell_type"] = "TCAM".into();
    let cfg = dir.path().join("tcam.json");
    fs::write(&cfg, doc.to_string()).unwrap();

    let o = camsim(&["validate", "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("error[cell_bits]"));

    let out = dir.path().join("report.json");
    let stored = fixture("mann/stored.csv");
    let query = fixture("mann/query.csv");
    let o = camsim(&[
        "simulate",
        "--config",
        p(&cfg),
        "--stored",
        p(&stored),
        "--query",
        p(&query),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn validate_exit_codes() {
    let cfg = fixture("mann/config.json");
    assert_eq!(
        camsim(&["validate", "--config", p(&cfg)]).status.code(),
        Some(0)
    );
    let o = camsim(&["validate", "--config", "/no/such/config.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/no/such/config.json"));
    assert_eq!(camsim(&["validate"]).status.code(), Some(1));
}

#[test]
fn sweep_writes_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep.json");
    fs::write(&sweep, r#"{"circuit.columns": [32, 64, 128]}"#).unwrap();
    let out = dir.path().join("sweep.csv");
    let (cfg, stored, query, labels, cm) = (
        fixture("mann/config.json"),
        fixture("mann/stored.csv"),
        fixture("mann/query.csv"),
        fixture("mann/labels.txt"),
        fixture("mann/cost_model.json"),
    );
    let o = camsim(&[
        "sweep",
        "--config",
        p(&cfg),
        "--sweep",
        p(&sweep),
        "--stored",
        p(&stored),
        "--query",
        p(&query),
        "--labels",
        p(&labels),
        "--cost-model",
        p(&cm),
        "--out",
        p(&out),
    ]);
    // Only the 32x64 subarray has costs, so the 32x32 point aborts the sweep.
    assert_eq!(
        o.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let o = camsim(&[
        "sweep",
        "--config",
        p(&cfg),
        "--sweep",
        p(&sweep),
        "--stored",
        p(&stored),
        "--query",
        p(&query),
        "--labels",
        p(&labels),
        "--repeats",
        "2",
        "--out",
        p(&out),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "circuit.columns,status,accuracy,latency_ns,energy_pj,edp,approximate"
    );
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("32,ok,"));
    assert!(lines[3].starts_with("128,ok,"));
    // 128 columns hold the whole vector: no voting, no approximation.
    assert!(lines[3].ends_with(",false"));
    assert!(lines[1].ends_with(",true"));
}

#[test]
fn label_count_mismatch_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let labels = dir.path().join("labels.txt");
    fs::write(&labels, "1\n2\n").unwrap();
    let (cfg, stored, query) = (
        fixture("mann/config.json"),
        fixture("mann/stored.csv"),
        fixture("mann/query.csv"),
    );
    let out = dir.path().join("r.json");
    let o = camsim(&[
        "simulate",
        "--config",
        p(&cfg),
        "--stored",
        p(&stored),
        "--query",
        p(&query),
        "--labels",
        p(&labels),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
