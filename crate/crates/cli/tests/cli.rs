use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn affloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_affloc")).args(args).env_remove("AFFLOC_OUT_DIR").output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn reference_scenario() -> Value {
    serde_json::from_str(&fs::read_to_string(bundled("reference.json")).unwrap()).unwrap()
}

fn write(dir: &Path, name: &str, v: &Value) -> String {
    let p = dir.join(name);
    fs::write(&p, v.to_string()).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn verify_accepts_an_euc_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let fw = dir.path().join("fw.json");
    let out = affloc(&["construct", "--random", "15", "--seed", "8", "--out", fw.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out = affloc(&["verify", fw.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["pass"], json!(true));
}

#[test]
fn verify_rejects_a_cycle() {
    let dir = tempfile::tempdir().unwrap();
    let fw = json!({
        "dim": 2,
        "leaders": [1, 2, 3],
        "nodes": [
            {"id": 1, "position": [0.0, 0.0]},
            {"id": 2, "position": [2.0, 0.0]},
            {"id": 3, "position": [0.0, 2.0]},
            {"id": 4, "position": [1.0, 0.5]},
            {"id": 5, "position": [0.5, 1.0]}
        ],
        "edges": [
            {"from": 1, "to": 4, "weight": 1.0},
            {"from": 5, "to": 4, "weight": 0.5},
            {"from": 2, "to": 5, "weight": 1.0},
            {"from": 4, "to": 5, "weight": 0.5}
        ]
    });
    let out = affloc(&["verify", &write(dir.path(), "cyclic.json", &fw)]);
    assert_eq!(code(&out), 1);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["layerable"], json!(false));
    assert!(report["cycle"].is_array());
}

#[test]
fn verify_rejects_malformed_input() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("broken.json");
    fs::write(&p, "{\"dim\": 2, \"leaders\": [").unwrap();
    assert_eq!(code(&affloc(&["verify", p.to_str().unwrap()])), 2);
    assert_eq!(code(&affloc(&["verify", "/no/such/file.json"])), 2);
}

#[test]
fn removing_an_end_node_shrinks_the_framework() {
    let dir = tempfile::tempdir().unwrap();
    let ev = write(dir.path(), "ev.json", &json!({"kind": "remove", "node": 9}));
    let out_dir = dir.path().join("out");
    let fw = bundled("reference_framework.json");
    let out = affloc(&["reconfigure", fw.to_str().unwrap(), &ev, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let before: Value = serde_json::from_str(&fs::read_to_string(&fw).unwrap()).unwrap();
    let after: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("framework.json")).unwrap()).unwrap();
    assert_eq!(after["nodes"].as_array().unwrap().len() + 1, before["nodes"].as_array().unwrap().len());
    let report: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["inheritance_path"], json!([9]));
    assert_eq!(report["tables_match"], json!(true));
}

#[test]
fn node_four_removal_stays_on_its_chain() {
    let dir = tempfile::tempdir().unwrap();
    let ev = write(dir.path(), "ev.json", &json!({"kind": "remove", "node": 4}));
    let out = affloc(&["reconfigure", bundled("reference_framework.json").to_str().unwrap(), &ev, "--seed", "11"]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["inheritance_path"], json!([4, 6, 7, 8]));
    for p in report["participants"].as_array().unwrap() {
        assert_ne!(p, &json!(5));
        assert_ne!(p, &json!(9));
    }
}

#[test]
fn leader_removal_is_a_domain_failure() {
    let dir = tempfile::tempdir().unwrap();
    let ev = write(dir.path(), "ev.json", &json!({"kind": "remove", "node": 2}));
    let out = affloc(&["reconfigure", bundled("reference_framework.json").to_str().unwrap(), &ev]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("leader"));
}

#[test]
fn zero_horizon_writes_empty_tables() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = reference_scenario();
    sc["horizon"] = json!(0.0);
    sc["events"] = json!([]);
    let path = write(dir.path(), "sc.json", &sc);
    let out_dir = dir.path().join("out");
    let out = affloc(&["simulate", &path, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let traj = fs::read_to_string(out_dir.join("trajectories.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1);
    assert!(traj.starts_with("t,agent,x0_0"));
}

#[test]
fn weak_beta_exits_with_a_margin_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = affloc(&["gains", bundled("reference_framework.json").to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let mut params = report["params"].clone();
    params["beta"] = json!(0.05);
    let mut sc = reference_scenario();
    sc["horizon"] = json!(0.5);
    sc["events"] = json!([]);
    sc["gains"] = params;
    let path = write(dir.path(), "sc.json", &sc);
    let out = affloc(&["simulate", &path, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gain conditions"), "{err}");
    assert!(err.contains("beta"), "{err}");
}

#[test]
fn invalid_scenario_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = reference_scenario();
    sc["dt"] = json!(-1.0);
    let path = write(dir.path(), "sc.json", &sc);
    assert_eq!(code(&affloc(&["simulate", &path, "--out", dir.path().to_str().unwrap()])), 2);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = reference_scenario();
    sc["horizon"] = json!(0.2);
    sc["events"] = json!([]);
    let path = write(dir.path(), "sc.json", &sc);
    let target = dir.path().join("env-out");
    let out = Command::new(env!("CARGO_BIN_EXE_affloc"))
        .args(["simulate", &path])
        .env("AFFLOC_OUT_DIR", &target)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert!(target.join("errors.csv").exists());
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = reference_scenario();
    sc["horizon"] = json!(8.0);
    sc["events"] = json!([{"t": 4.0, "kind": "remove", "node": 4}]);
    let path = write(dir.path(), "sc.json", &sc);
    let runs: Vec<PathBuf> = (0..2).map(|k| dir.path().join(format!("run{k}"))).collect();
    for r in &runs {
        let out = affloc(&["simulate", &path, "--seed", "5", "--out", r.to_str().unwrap()]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["trajectories.csv", "errors.csv", "lyapunov.csv", "messages.log"] {
        assert_eq!(fs::read(runs[0].join(name)).unwrap(), fs::read(runs[1].join(name)).unwrap(), "{name}");
    }
}

#[test]
fn plots_can_be_redrawn() {
    let dir = tempfile::tempdir().unwrap();
    let mut sc = reference_scenario();
    sc["horizon"] = json!(2.0);
    sc["events"] = json!([{"t": 1.0, "kind": "remove", "node": 9}]);
    let path = write(dir.path(), "sc.json", &sc);
    let out_dir = dir.path().join("out");
    assert_eq!(code(&affloc(&["simulate", &path, "--out", out_dir.to_str().unwrap()])), 0);
    fs::remove_file(out_dir.join("errors.svg")).unwrap();
    assert_eq!(code(&affloc(&["export-plots", out_dir.to_str().unwrap()])), 0);
    let svg = fs::read_to_string(out_dir.join("errors.svg")).unwrap();
    assert_eq!(svg.matches("log10 |e|").count(), 2);
}
