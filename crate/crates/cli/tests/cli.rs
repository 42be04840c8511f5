use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TOPOLOGY: &str = r#"{"nodes": ["1", "2", "3", "4"], "links": [
    {"id": "1-3", "src": "1", "dst": "3", "capacity": 1},
    {"id": "3-4", "src": "3", "dst": "4", "capacity": 1},
    {"id": "1-2", "src": "1", "dst": "2", "capacity": 1},
    {"id": "2-3", "src": "2", "dst": "3", "capacity": 1}]}"#;

fn spef(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spef"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn instance(dir: &Path, demands: &str) {
    fs::write(dir.join("topo.json"), TOPOLOGY).unwrap();
    fs::write(dir.join("d.csv"), demands).unwrap();
}

#[test]
fn demo_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = spef(dir.path(), &["demo", "--out", "run"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "weights.json",
        "spef_tables.json",
        "metrics_spef.json",
        "metrics_ospf.json",
        "trace_alg1.csv",
        "trace_alg2.csv",
        "sorted_util_spef.csv",
        "sorted_util_ospf.csv",
        "summary.json",
    ] {
        assert!(dir.path().join("run").join(f).is_file(), "missing {f}");
    }
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/metrics_spef.json")).unwrap()).unwrap();
    let u = metrics["utilization"]["1-3"].as_f64().unwrap();
    assert!((u - 2.0 / 3.0).abs() < 0.01, "{u}");
    // OSPF saturates the direct link, so its utility is reported as null.
    let ospf: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("run/metrics_ospf.json")).unwrap()).unwrap();
    assert!(ospf["normalized_utility"].is_null());
}

#[test]
fn solve_then_split_from_weights_file() {
    let dir = tempfile::tempdir().unwrap();
    instance(dir.path(), "src,dst,demand\n1,3,1\n3,4,0.9\n");
    let base = ["--topology", "topo.json", "--demands", "d.csv", "--out", "r"];
    let solve = spef(dir.path(), &[&["solve"][..], &base].concat());
    assert_eq!(solve.status.code(), Some(0));
    let split = spef(dir.path(), &[&["split", "--weights", "r/weights.json"][..], &base].concat());
    assert_eq!(split.status.code(), Some(0), "{}", String::from_utf8_lossy(&split.stderr));
    let tables: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/spef_tables.json")).unwrap()).unwrap();
    assert!(tables.to_string().contains("\"via\""));
}

#[test]
fn sweep_prints_csv_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let out = spef(dir.path(), &["sweep", "--builtin", "fig1", "--scales", "0.5,1,1.05"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let scales: Vec<&str> = text.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(scales, ["0.5", "1", "1.05"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    instance(dir.path(), "src,dst,demand\n1,3,2.5\n");
    let infeasible = spef(dir.path(), &["solve", "--topology", "topo.json", "--demands", "d.csv"]);
    assert_eq!(infeasible.status.code(), Some(3));

    let missing = spef(dir.path(), &["solve", "--topology", "nope.json", "--demands", "d.csv"]);
    assert_eq!(missing.status.code(), Some(4));

    fs::write(dir.path().join("bad.json"), r#"{"unknown_field": 1}"#).unwrap();
    let bad = spef(dir.path(), &["run", "--config", "bad.json"]);
    assert_eq!(bad.status.code(), Some(4));

    let stalled = spef(
        dir.path(),
        &["solve", "--builtin", "fig1", "--max-iters", "10", "--no-refine"],
    );
    assert_eq!(stalled.status.code(), Some(2));
}
