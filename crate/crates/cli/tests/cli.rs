use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nls-msol"));
    cmd.env_remove("NLS_MSOL_THREADS");
    cmd
}

fn small_config() -> Value {
    json!({
        "version": 1,
        "p": 7.0,
        "solitons": [{"c": 1.0, "v": -1.0, "x0": -4.5}, {"c": 2.0, "v": 1.0, "x0": 4.5}],
        "amplitudes": [0.0, 0.0],
        "grid": {"L": 24.0 * std::f64::consts::PI, "M": 1024},
        "times": {"t0": 1.25, "Sn": 2.25},
        "integrator": {"dt": 1e-3, "scheme": "fourth-order-splitting", "dealias": true, "stride": 50}
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn run_with(cfg: &Path, out: &Path, args: &[&str]) -> Output {
    let mut full = vec!["--config", cfg.to_str().unwrap(), "--output", out.to_str().unwrap()];
    full.extend_from_slice(args);
    run(&full)
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn error_of(out: &Output) -> Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let line = stderr.lines().last().unwrap_or_default();
    serde_json::from_str::<Value>(line).unwrap_or_else(|_| panic!("stderr is not JSON: {stderr}"))["error"].clone()
}

#[test]
fn ground_state_with_defaults() {
    let tmp = TempDir::new().unwrap();
    let out = run(&["--output", tmp.path().to_str().unwrap(), "ground-state"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&tmp.path().join("ground_state.json"));
    assert_eq!(doc["command"], "ground-state");
    assert_eq!(doc["config_hash"].as_str().unwrap().len(), 64);
    for key in ["e0", "eta0", "sigma0", "gamma"] {
        assert!(doc["constants"][key].as_f64().unwrap() > 0.0);
    }
    let entry = &doc["result"]["entries"][0];
    assert_eq!(entry["c"], 1.0);
    assert!(entry["ode_residual"].as_f64().unwrap() < 1e-10);
    assert!(tmp.path().join("ground_state_0.bin").exists());
    assert!(tmp.path().join("ground_state_0.json").exists());
}

#[test]
fn one_dump_per_frequency() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg["grid"] = json!({"L": 100.0, "M": 4096});
    cfg["c_values"] = json!([0.5, 1.0, 2.0]);
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    let out = run_with(&path, &tmp.path().join("out"), &["ground-state"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for i in 0..3 {
        assert!(tmp.path().join(format!("out/ground_state_{i}.bin")).exists());
    }
    let doc = read_json(&tmp.path().join("out/ground_state.json"));
    assert_eq!(doc["result"]["entries"].as_array().unwrap().len(), 3);
}

#[test]
fn validation_failures_exit_2() {
    let tmp = TempDir::new().unwrap();
    let mut cases = Vec::new();
    let mut low_p = small_config();
    low_p["p"] = json!(3.0);
    cases.push(("low_p", low_p));
    let mut unknown = small_config();
    unknown["tolerance"] = json!(1e-3);
    cases.push(("unknown", unknown));
    let mut no_grid = small_config();
    no_grid.as_object_mut().unwrap().remove("grid");
    cases.push(("no_grid", no_grid));
    let mut version = small_config();
    version["version"] = json!(99);
    cases.push(("version", version));
    let mut times = small_config();
    times["times"] = json!({"t0": 2.0, "Sn": 1.0});
    cases.push(("times", times));
    for (name, cfg) in cases {
        let path = write_config(tmp.path(), &format!("{name}.json"), &cfg);
        let out = run_with(&path, &tmp.path().join(name), &["spectrum"]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        let err = error_of(&out);
        assert_eq!(err["kind"], "validation", "{name}");
        assert_eq!(err["exit_code"], 2);
    }
    let out = run(&["--config", "/nonexistent/cfg.json", "spectrum"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn spectrum_scaling_table() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg["c_values"] = json!([1.0, 2.0]);
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    let out = run_with(&path, &tmp.path().join("out"), &["spectrum"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(tmp.path().join("out/eigen_scaling.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("c,e_measured,e_scaled,ratio"));
    let one: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!((one[0], one[3]), (1.0, 1.0));
    let two: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((two[3] - 1.0).abs() < 1e-6);
    // 17 significant digits in every cell
    assert!(table.lines().skip(1).flat_map(|l| l.split(',')).all(|c| c.split('e').next().unwrap().len() == 18));
    let doc = read_json(&tmp.path().join("out/spectrum.json"));
    assert!((doc["result"]["e0"].as_f64().unwrap() - 2.905_088_377_862_3).abs() < 1e-8);
}

#[test]
fn construct_without_perturbation_and_diagnose() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "cfg.json", &small_config());
    let out_dir = tmp.path().join("out");
    let out = run_with(&path, &out_dir, &["construct"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&out_dir.join("construct.json"));
    let stages = doc["result"]["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 2);
    for s in stages {
        assert!(s["max_z_h1"].as_f64().unwrap() < 1e-9, "{s}");
    }
    assert!(out_dir.join("base/times.csv").exists() && out_dir.join("stage_2_series.csv").exists());

    // the base against itself: every perturbation quantity vanishes
    let diag = tmp.path().join("diag");
    let base = out_dir.join("base");
    let out = run_with(&path, &diag, &["diagnose", "--u", base.to_str().unwrap(), "--phi", base.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for file in ["projections.csv", "energy.csv", "source.csv"] {
        let text = fs::read_to_string(diag.join(file)).unwrap();
        for line in text.lines().skip(1) {
            assert!(line.split(',').skip(1).all(|v| v.parse::<f64>().unwrap() == 0.0), "{file}: {line}");
        }
    }
    let doc = read_json(&diag.join("diagnose.json"));
    assert!(doc["result"]["rates"]["z_h1"].is_null());
    assert!(doc["result"]["rates"]["transport"]["rate"].as_f64().unwrap() > 0.0);
}

#[test]
fn diagnose_rejects_mismatched_grids() {
    let tmp = TempDir::new().unwrap();
    let mut coarse = small_config();
    coarse["grid"]["M"] = json!(512);
    let fine = write_config(tmp.path(), "fine.json", &small_config());
    let coarse = write_config(tmp.path(), "coarse.json", &coarse);
    assert!(run_with(&fine, &tmp.path().join("a"), &["evolve"]).status.success());
    assert!(run_with(&coarse, &tmp.path().join("b"), &["evolve"]).status.success());
    let (a, b) = (tmp.path().join("a/evolve"), tmp.path().join("b/evolve"));
    let out = run_with(&fine, &tmp.path().join("c"), &["diagnose", "--u", a.to_str().unwrap(), "--phi", b.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_of(&out)["message"].as_str().unwrap().contains("grid"));
}

#[test]
fn long_window_needs_a_schedule() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg["times"] = json!({"t0": 1.25, "Sn": 5.25});
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    let out = run_with(&path, &tmp.path().join("out"), &["construct"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(error_of(&out)["message"].as_str().unwrap().contains("schedule"));
}

#[test]
fn blow_up_is_a_numerical_failure() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg["integrator"]["max_gradient"] = json!(1e-3);
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    let out = run_with(&path, &tmp.path().join("out"), &["evolve"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_of(&out)["kind"], "numerical");
}

#[test]
fn evolve_reports_conservation() {
    let tmp = TempDir::new().unwrap();
    let path = write_config(tmp.path(), "cfg.json", &small_config());
    let out = bin()
        .args(["--config", path.to_str().unwrap(), "--output", tmp.path().join("out").to_str().unwrap(), "evolve"])
        .env("NLS_MSOL_THREADS", "2")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(&tmp.path().join("out/evolve.json"));
    assert_eq!(doc["result"]["snapshots"], 21);
    // coarse grid: dealiasing trims a little mass off the narrow soliton
    assert!(doc["result"]["drift"]["mass_rel"].as_f64().unwrap() < 1e-8);
    let rows = fs::read_to_string(tmp.path().join("out/conserved.csv")).unwrap();
    assert_eq!(rows.lines().count(), 22);

    let out = run_with(&path, &tmp.path().join("zero"), &["--threads", "0", "evolve"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn reruns_are_bitwise_identical() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = small_config();
    cfg["amplitudes"] = json!([1.0, 0.0]);
    let path = write_config(tmp.path(), "cfg.json", &cfg);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    assert!(run_with(&path, &a, &["construct"]).status.success());
    assert!(run_with(&path, &b, &["--threads", "3", "construct"]).status.success());
    for file in ["construct.json", "base_series.csv", "stage_1_series.csv", "base/snap_00020.bin", "family/snap_00020.bin"] {
        assert_eq!(fs::read(a.join(file)).unwrap(), fs::read(b.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn config_hash_ignores_formatting() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config();
    let pretty = write_config(tmp.path(), "pretty.json", &cfg);
    let compact = tmp.path().join("compact.json");
    fs::write(&compact, serde_json::to_string(&cfg).unwrap()).unwrap();
    let hash = |p: &Path, o: &str| {
        assert!(run_with(p, &tmp.path().join(o), &["spectrum"]).status.success());
        read_json(&tmp.path().join(o).join("spectrum.json"))["config_hash"].clone()
    };
    assert_eq!(hash(&pretty, "x"), hash(&compact, "y"));
}
