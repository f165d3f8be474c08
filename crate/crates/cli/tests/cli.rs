use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn vpon(dir: &Path, args: &[&str], scenario: &str) -> Output {
    let config = dir.join("scenario.json");
    std::fs::write(&config, scenario).unwrap();
    Command::new(env!("CARGO_BIN_EXE_vpon"))
        .args(args)
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(dir.join("out"))
        .env_remove("VPON_THREADS")
        .output()
        .unwrap()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
}

/// Three macro sites 0.4 km apart with two RUs each.
const COMPACT_LAYOUT: &str = r#"{"inline": {
    "area": {"width": 1.2, "height": 0.4},
    "macros": [{"id": 0, "x": 0.2, "y": 0.2}, {"id": 1, "x": 0.6, "y": 0.2}, {"id": 2, "x": 1.0, "y": 0.2}],
    "smalls": [
        {"id": 0, "x": 0.1, "y": 0.1, "split": "7.1", "m": 32, "tree": 0},
        {"id": 1, "x": 0.3, "y": 0.3, "split": "7.2", "m": 32, "tree": 0},
        {"id": 2, "x": 0.5, "y": 0.1, "split": "7.2", "m": 32, "tree": 1},
        {"id": 3, "x": 0.7, "y": 0.3, "split": "7.1", "m": 32, "tree": 1},
        {"id": 4, "x": 0.9, "y": 0.1, "split": "7.2", "m": 32, "tree": 2},
        {"id": 5, "x": 1.1, "y": 0.3, "split": "7.2", "m": 32, "tree": 2}
    ]}}"#;

#[test]
fn feasibility_region_is_downward_closed() {
    let dir = TempDir::new().unwrap();
    let out = vpon(dir.path(), &["feasibility"], r#"{"loads": [0.3], "region": {"max71": 5, "max72": 6}}"#);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/region.csv"));
    assert_eq!(header, ["load", "n71", "n72", "latency_us", "feasible"]);
    assert_eq!(rows.len(), 6 * 7 - 1);
    let feasible: BTreeSet<(u32, u32)> = rows
        .iter()
        .filter(|r| r[4] == "true")
        .map(|r| (r[1].parse().unwrap(), r[2].parse().unwrap()))
        .collect();
    assert!(!feasible.is_empty());
    for &(a, b) in &feasible {
        for p in [(a.wrapping_sub(1), b), (a, b.wrapping_sub(1))] {
            if p.0 != u32::MAX && p.1 != u32::MAX && p != (0, 0) {
                assert!(feasible.contains(&p), "{p:?} missing below {:?}", (a, b));
            }
        }
    }
}

#[test]
fn feasible_mix_count_shrinks_with_load() {
    let dir = TempDir::new().unwrap();
    let out = vpon(dir.path(), &["feasibility"], r#"{"loads": [0.6, 0.1, 0.3]}"#);
    assert!(out.status.success());
    let (_, rows) = read_csv(&dir.path().join("out/region.csv"));
    let count = |load: &str| rows.iter().filter(|r| r[0] == load && r[4] == "true").count();
    let counts = [count("0.1"), count("0.3"), count("0.6")];
    assert!(counts[0] >= counts[1] && counts[1] >= counts[2], "{counts:?}");
    // rows come out sorted by load regardless of scenario order
    assert_eq!(rows.first().unwrap()[0], "0.1");
    assert_eq!(rows.last().unwrap()[0], "0.6");
}

#[test]
fn malformed_config_names_the_key() {
    let dir = TempDir::new().unwrap();
    let out = vpon(dir.path(), &["feasibility"], r#"{"sim": {"duration": 10, "cycles": 5}}"#);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("sim.cycles"), "{err}");

    let out = vpon(dir.path(), &["optimize"], "{not json");
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_load_pools_everything_into_one_mec() {
    let dir = TempDir::new().unwrap();
    let scenario = format!(r#"{{"layout": {COMPACT_LAYOUT}, "loads": [0.0], "w": 3}}"#);
    let out = vpon(dir.path(), &["optimize"], &scenario);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("out/solution_seed1_load0_iter10.json")).unwrap();
    let sol: serde_json::Value = serde_json::from_str(&text).unwrap();
    for key in ["active_trees", "slices", "latency_us", "objective", "iterations", "cuts", "wall_ms"] {
        assert!(sol.get(key).is_some(), "missing {key}");
    }
    assert_eq!(sol["active_trees"].as_array().unwrap().len(), 1);
    let (_, edges) = read_csv(&dir.path().join("out/edges.csv"));
    assert_eq!(edges.len(), 6);
    let trees: BTreeSet<&str> = edges.iter().map(|e| e[5].as_str()).collect();
    assert_eq!(trees.len(), 1);
}

#[test]
fn more_iterations_never_need_more_mecs() {
    let dir = TempDir::new().unwrap();
    let scenario = r#"{"layout": {"generate": {"n_macro": 4, "smalls_per_macro_mean": 4}},
        "seeds": [5], "loads": [0.3], "max_iterations": [10, 70]}"#;
    let out = vpon(dir.path(), &["optimize"], scenario);
    assert!(out.status.success());
    let (header, rows) = read_csv(&dir.path().join("out/latency.csv"));
    assert_eq!(
        &header[2..],
        ["slice_id", "n71", "n72", "load", "wait_us", "prop_us", "total_us", "rho"]
    );
    let slices = |iters: &str| rows.iter().filter(|r| r[1] == iters).count();
    assert!(slices("70") <= slices("10"));
    let total = column(&header, "total_us");
    assert!(rows.iter().all(|r| r[total].parse::<f64>().unwrap() <= 100.0));
}

#[test]
fn infeasible_threshold_exits_with_report() {
    let dir = TempDir::new().unwrap();
    let scenario = format!(r#"{{"layout": {COMPACT_LAYOUT}, "threshold_us": 50, "max_iterations": [3]}}"#);
    let out = vpon(dir.path(), &["optimize"], &scenario);
    assert_eq!(out.status.code(), Some(2));
    let text = std::fs::read_to_string(dir.path().join("out/infeasible_seed1_load30_iter3.json")).unwrap();
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(report["reason"].as_str().is_some());
    let (_, diag) = read_csv(&dir.path().join("out/diagnostics.csv"));
    assert!(!diag.is_empty());
}

#[test]
fn outputs_are_deterministic() {
    let scenario = r#"{"layout": {"generate": {"n_macro": 3}}, "seeds": [2, 3], "loads": [0.1, 0.3]}"#;
    let files = ["latency.csv", "edges.csv", "diagnostics.csv", "layout_seed2.json"];
    let read_all = |dir: &TempDir| -> Vec<String> {
        files
            .iter()
            .map(|f| std::fs::read_to_string(dir.path().join("out").join(f)).unwrap())
            .collect()
    };
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    vpon(a.path(), &["optimize"], scenario);
    vpon(b.path(), &["optimize"], scenario);
    assert_eq!(read_all(&a), read_all(&b));
}

#[test]
fn validate_single_cell() {
    let dir = TempDir::new().unwrap();
    let scenario = r#"{"loads": [0.2], "validate": {"grid": [[1, 1]]}, "sim": {"duration": 20000}}"#;
    let out = vpon(dir.path(), &["validate"], scenario);
    assert!(out.status.success());
    let (header, rows) = read_csv(&dir.path().join("out/validation.csv"));
    assert_eq!(
        &header[..8],
        ["n71", "n72", "load", "sim_mean_us", "analytic_us", "rel_err", "feasible_sim", "feasible_analytic"]
    );
    assert_eq!(rows.len(), 1);
    assert!(rows[0][5].parse::<f64>().unwrap() < 0.15);
    assert!(String::from_utf8_lossy(&out.stdout).contains("max relative error"));
}

#[test]
fn benchmark_rows_and_speedup() {
    let dir = TempDir::new().unwrap();
    let scenario = r#"{"layout": {"generate": {"n_macro": 4, "smalls_per_macro_mean": 4}},
        "loads": [0.1, 0.3], "max_iterations": [10]}"#;
    let out = vpon(dir.path(), &["benchmark", "--sim-in-loop"], scenario);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, rows) = read_csv(&dir.path().join("out/timing.csv"));
    for name in ["load", "max_iterations", "wall_ms", "mec_count"] {
        column(&header, name);
    }
    assert_eq!(rows.len(), 4);
    let ms = |evaluator: &str, load: &str| -> f64 {
        rows.iter().find(|r| r[1] == evaluator && r[2] == load).unwrap()[4].parse().unwrap()
    };
    assert!(rows.iter().all(|r| r[4].parse::<f64>().unwrap() > 0.0));
    assert!(ms("analytic", "0.3") >= ms("analytic", "0.1"));
    assert!(ms("simulated", "0.3") >= 10.0 * ms("analytic", "0.3"));
    let mecs: BTreeSet<&str> = rows.iter().filter(|r| r[2] == "0.3").map(|r| r[5].as_str()).collect();
    assert_eq!(mecs.len(), 1, "both evaluators agree on the MEC count");
}

#[test]
fn generated_layout_round_trips_through_a_file() {
    let dir = TempDir::new().unwrap();
    let out = vpon(dir.path(), &["gen-layout", "--seed", "42"], r#"{"layout": {"generate": {"n_macro": 3}}}"#);
    assert!(out.status.success());
    let first = std::fs::read_to_string(dir.path().join("out/layout.json")).unwrap();
    std::fs::copy(dir.path().join("out/layout.json"), dir.path().join("saved.json")).unwrap();
    let out = vpon(dir.path(), &["gen-layout"], r#"{"layout": {"file": "saved.json"}}"#);
    assert!(out.status.success());
    let second = std::fs::read_to_string(dir.path().join("out/layout.json")).unwrap();
    assert_eq!(first, second);
}

#[test]
fn bad_thread_cap_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("scenario.json");
    std::fs::write(&config, "{}").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_vpon"))
        .args(["gen-layout", "--out"])
        .arg(dir.path())
        .arg("--config")
        .arg(&config)
        .env("VPON_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
