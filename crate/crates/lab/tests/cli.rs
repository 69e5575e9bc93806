//! End-to-end runs of the `mspl` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mspl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mspl"))
        .args(args)
        .env("MSPL_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

const SWEEP: &[&str] = &[
    "sweep-scaling",
    "--preset",
    "muller",
    "--model",
    "both",
    "--eps-list",
    "0.05,0.02,0.01",
    "--mesh-n",
    "256",
    "--seed",
    "5",
];

fn sweep_into(dir: &Path, extra: &[&str]) -> Output {
    let mut args = SWEEP.to_vec();
    args.extend_from_slice(&["--out", dir.to_str().unwrap()]);
    args.extend_from_slice(extra);
    mspl(&args)
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [a.path(), b.path()] {
        let out = sweep_into(dir, &["--plot"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["sweep_scaling.csv", "sweep_scaling.params.json", "sweep_scaling.json", "sweep_scaling.svg"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} differs");
    }
}

#[test]
fn csv_and_json_carry_the_same_numbers() {
    let dir = tempfile::tempdir().unwrap();
    assert!(sweep_into(dir.path(), &[]).status.success());
    let csv = read(dir.path(), "sweep_scaling.csv");
    let json: Value = serde_json::from_str(&read(dir.path(), "sweep_scaling.json")).unwrap();
    let rows = json["rows"].as_array().unwrap();

    let mut reader = csv::Reader::from_reader(csv.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["eps", "model", "energy_total", "energy_surface", "energy_well", "energy_bulk", "n_jumps", "slope_running"]
    );
    let records: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(records.len(), rows.len());
    assert_eq!(rows.len(), 6);
    for (rec, row) in records.iter().zip(rows) {
        for (k, cell) in header.iter().zip(rec.iter()) {
            match &row[k] {
                Value::Number(n) => assert_eq!(cell.parse::<f64>().unwrap(), n.as_f64().unwrap(), "{k}"),
                Value::String(s) => assert_eq!(cell, s),
                Value::Null => assert_eq!(cell, ""),
                other => panic!("unexpected {other}"),
            }
        }
        // provenance travels with every JSON row
        let p = &row["params"];
        assert_eq!(p["alpha"], 0.0);
        assert_eq!(p["beta"], 0.0);
        assert_eq!(p["eps"], row["eps"]);
        if row["model"] == "diffuse" {
            assert_eq!(p["mesh_n"], 256);
            assert_eq!(p["grading_q"], 2.0);
            assert!(p["tol"].as_f64().unwrap() > 0.0);
        }
    }
    // rows sorted by (eps, model), sharp before diffuse
    let keys: Vec<(f64, u8)> = rows
        .iter()
        .map(|r| (r["eps"].as_f64().unwrap(), u8::from(r["model"] == "diffuse")))
        .collect();
    let mut sorted = keys.clone();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    assert_eq!(keys, sorted);
    let meta: Value = serde_json::from_str(&read(dir.path(), "sweep_scaling.params.json")).unwrap();
    assert_eq!(meta["weights"]["alpha"], 0.0);
}

#[test]
fn preset_command() {
    let out = mspl(&["preset", "spherical-ok"]);
    assert!(out.status.success());
    let cfg: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg["weights"]["alpha"], 0.5);
    assert_eq!(cfg["weights"]["beta"], 1.0);
    assert_eq!(mspl(&["preset", "bogus"]).status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_two() {
    assert_eq!(mspl(&["sharp-min", "--preset", "bogus"]).status.code(), Some(2));
    assert_eq!(mspl(&["sharp-min", "--eps", "-0.1"]).status.code(), Some(2));
    assert_eq!(mspl(&["sharp-min", "--beta", "3.5"]).status.code(), Some(2));
    assert_eq!(mspl(&["diffuse-min", "--mesh-n", "8"]).status.code(), Some(2));
    assert_eq!(mspl(&["period-check", "--eps", "0.01", "--s-list", "0.5,1.2"]).status.code(), Some(2));
    assert_eq!(mspl(&["period-check", "--eps", "0.01", "--s-list", "0"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"eps_list\": [] }").unwrap();
    assert_eq!(mspl(&["sweep-scaling", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    std::fs::write(&bad, "not json").unwrap();
    assert_eq!(mspl(&["sweep-scaling", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    let out = mspl(&["preset", "muller"]);
    let mut cfg: Value = serde_json::from_slice(&out.stdout).unwrap();
    cfg["eps_list"] = serde_json::json!([0.05]);
    std::fs::write(&path, cfg.to_string()).unwrap();
    let out = mspl(&["sharp-min", "--config", path.to_str().unwrap()]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    // ε > 1/32: one centred tooth
    assert_eq!(doc["n_jumps"], 1);
    assert!((doc["energy"]["total"].as_f64().unwrap() - (0.1 + 1.0 / 12.0)).abs() < 1e-9);
}

#[test]
fn cell_command() {
    let out = mspl(&["cell", "--s", "0.5", "--alpha", "0.5", "--beta", "1"]);
    assert!(out.status.success());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let period = doc["minimum"]["period"].as_f64().unwrap();
    assert!((period - 4.0 * 0.5f64.powf(5.0 / 12.0)).abs() < 1e-8);
}

#[test]
fn energy_profile_flags_rows_below_threshold() {
    let out = mspl(&["energy-profile", "--eps", "1e-3", "--n-x", "12", "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = doc["rows"].as_array().unwrap();
    let flagged = rows.iter().filter(|r| r["flag_below_threshold"] == true).count();
    assert_eq!(flagged, 3);
    assert_eq!(rows.len(), 15);
    let last = rows.last().unwrap();
    assert_eq!(last["x"], 1.0);
    assert!((last["phi"].as_f64().unwrap() - doc["summary"]["energy_total"].as_f64().unwrap()).abs() < 1e-14);
}

#[test]
fn period_check_on_sharp_minimizer() {
    let out = mspl(&[
        "period-check",
        "--preset",
        "spherical-ok",
        "--model",
        "sharp",
        "--eps",
        "1e-4",
        "--format",
        "csv",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("s,h_emp,h_pred,ratio,n_teeth\n"));
    assert_eq!(text.lines().count(), 4);
}

#[test]
fn diffuse_min_reports_the_field() {
    let out = mspl(&["diffuse-min", "--eps", "0.02", "--mesh-n", "128"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["converged"], true);
    assert_eq!(doc["values"].as_array().unwrap().len(), 129);
    assert!(doc["energy"]["total"].as_f64().unwrap() <= doc["construction_energy"].as_f64().unwrap());
}
