mod common;

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    /// Data directory plus a small-grid config passed through the
    /// environment, with CA ingested.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("interveno.conf"), common::SMALL_CONFIG).unwrap();
        let csv = common::fixture("CA", 120, 7).to_csv();
        std::fs::write(dir.path().join("ca.csv"), csv).unwrap();
        let ws = Workspace { dir };
        let out = ws.run(&["ingest", "--region", "CA", "--input", "ca.csv"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        ws
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_interveno"))
            .args(args)
            .args(["--data-dir", "data"])
            .current_dir(self.path())
            .env("INTERVENO_CONFIG", self.path().join("interveno.conf"))
            .output()
            .unwrap()
    }

    fn json(&self, args: &[&str]) -> Value {
        let out = self.run(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice(&out.stdout).unwrap()
    }
}

fn bare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_interveno")).args(args).output().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(bare(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(bare(&[]).status.code(), Some(2));
    assert_eq!(bare(&["backtest", "--origins", "many"]).status.code(), Some(2));
    let ws = Workspace::new();
    assert_eq!(ws.run(&["train"]).status.code(), Some(2));
    let out = ws.run(&["simulate", "--region", "CA", "--set", "nonsense=1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = ws.run(&["simulate", "--region", "CA", "--set", "policy_stay_at_home"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn operational_errors_exit_1() {
    let ws = Workspace::new();
    let out = ws.run(&["backtest", "--region", "NV", "--json"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"].as_str().unwrap().contains("NV"));
    assert_eq!(ws.run(&["forecast", "--region", "CA"]).status.code(), Some(1));
    assert_eq!(
        ws.run(&["ingest", "--region", "CA", "--input", "missing.csv"]).status.code(),
        Some(1)
    );
    std::fs::write(ws.path().join("bad.conf"), "grid.nope = 1\n").unwrap();
    assert_eq!(
        ws.run(&["--config", "bad.conf", "backtest", "--region", "CA"]).status.code(),
        Some(1)
    );
}

#[test]
fn backtest_json_report() {
    let ws = Workspace::new();
    let r = ws.json(&["backtest", "--region", "CA", "--json"]);
    assert_eq!(r["horizon_days"], 14);
    assert_eq!(r["y_true"].as_array().unwrap().len(), 14);
    assert_eq!(r["y_pred"].as_array().unwrap().len(), 14);
    assert!(r["r_squared"].as_f64().unwrap() <= 1.0);
    assert_eq!(r["train_through"], "2020-06-14");

    let out = ws.run(&["backtest", "--region", "CA", "--csv"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("date,y_true,y_pred\n"));
    assert_eq!(text.lines().count(), 15);

    let rolling = ws.json(&["backtest", "--region", "CA", "--origins", "3", "--json"]);
    let through: Vec<&str> = rolling
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["train_through"].as_str().unwrap())
        .collect();
    assert_eq!(through, ["2020-06-14", "2020-06-07", "2020-05-31"]);
}

#[test]
fn train_then_simulate_with_override() {
    let ws = Workspace::new();
    let t = ws.json(&["train", "--region", "CA", "--json", "--seed", "5"]);
    assert_eq!(t["cases"]["seed"], 5);
    assert_eq!(t["cases"]["trained_through"], "2020-06-28");
    assert!(ws.path().join("data/CA/cases.json").exists());
    assert!(ws.path().join("data/CA/revenue.json").exists());

    let r = ws.json(&["simulate", "--region", "CA", "--set", "policy_stay_at_home=3", "--json"]);
    assert_eq!(r["dates"].as_array().unwrap().len(), 35);
    assert_ne!(r["cases_scenario"], r["cases_baseline"]);
    let sum = |k: &str| r[k].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).sum::<f64>();
    assert!(sum("cases_scenario") < sum("cases_baseline"));

    let f = ws.json(&["forecast", "--region", "CA", "--horizon", "10", "--json"]);
    assert_eq!(f["dates"].as_array().unwrap().len(), 10);
    assert_eq!(f["cases_scenario"], f["cases_baseline"]);

    let v = ws.json(&[
        "simulate",
        "--region",
        "CA",
        "--set",
        "vaccine.coverage=0.5",
        "--set",
        "vaccine.ramp_days=10",
        "--set",
        "vaccine.efficacy=0.9",
        "--json",
    ]);
    let protect = v["protect_rate_path"].as_array().unwrap();
    assert!((protect[34].as_f64().unwrap() - 0.45).abs() < 1e-12);

    let bad = ws.run(&["simulate", "--region", "CA", "--set", "policy_stay_at_home=9"]);
    assert_eq!(bad.status.code(), Some(1));

    let e = ws.json(&["explain", "--region", "CA", "--date", "2020-06-28", "--json"]);
    assert_eq!(e["method"], "lime");
    assert!(!e["contributions"].as_array().unwrap().is_empty());

    std::fs::write(
        ws.path().join("space.json"),
        r#"{"horizon_days": 14, "policy_levels": {"policy_stay_at_home": [0, 3]}}"#,
    )
    .unwrap();
    let b = ws.json(&["best-case", "--region", "CA", "--space", "space.json", "--top", "1", "--json"]);
    assert_eq!(b["evaluated"], 2);
    assert_eq!(b["ranked"].as_array().unwrap().len(), 1);
}

#[test]
fn validate_reports_missing_cells() {
    let ws = Workspace::new();
    std::fs::write(ws.path().join("gappy.csv"), "date,new_cases,tests\n2020-01-01,5,\n2020-01-03,7,100\n").unwrap();
    let r = ws.json(&["validate", "--region", "CA", "--input", "gappy.csv", "--json"]);
    assert_eq!(r["n_rows"], 3);
    assert_eq!(r["ok"], false);
    let missing = |name: &str| {
        r["columns"].as_array().unwrap().iter().find(|c| c["name"] == name).unwrap()["missing"].clone()
    };
    // The 2020-01-02 gap becomes an all-missing row.
    assert_eq!(missing("new_cases"), 1);
    assert_eq!(missing("tests"), 2);
    let stored = ws.json(&["validate", "--region", "CA", "--json"]);
    assert_eq!(stored["n_rows"], 120);
}
