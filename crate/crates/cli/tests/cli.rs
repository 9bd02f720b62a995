use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_satguard"));
    c.env_remove("SATGUARD_QUAD_STEP");
    c
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples/paper_sec5.json")
}

fn golden() -> Value {
    serde_json::from_str(&std::fs::read_to_string(golden_path()).unwrap()).unwrap()
}

fn write_config(dir: &TempDir, name: &str, v: &Value) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(text: &str, key: &str) -> String {
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` in output:\n{text}"))
        .to_string()
}

fn num(text: &str, key: &str) -> f64 {
    value(text, key).parse().unwrap()
}

/// The golden scenario shortened to keep debug-build runs quick.
fn short_golden(t_end: f64) -> Value {
    let mut v = golden();
    v["sim"]["t_end"] = json!(t_end);
    v
}

fn zero_disturbance() -> Value {
    let mut v = golden();
    v["envelope"] = json!({
        "u_min": -2.0, "u_max": 2.0, "g_min": -0.5, "g_max": 0.5,
        "alpha_min": 0.1, "alpha_max": 0.3, "w_bound": 0.0, "tau": 10.0
    });
    v["plant"]["B1"] = json!([[0.0], [0.0], [0.0]]);
    v["plant"]["B2"] = json!([[0.0], [0.0], [0.0]]);
    v["signals"]["g"] = json!({"kind": "constant", "value": 0.0});
    v["signals"]["w"] = json!({"kind": "constant", "value": 0.0});
    v["signals"]["setpoint"] = json!({"segments": [[0.0, 0.7]]});
    v["controller"] = json!({"lambda": 2.0, "lambda_f": 0.5});
    v["sim"] = json!({"t_end": 600.0, "step": 0.01, "record_every": 10, "y0": -1.0});
    v
}

#[test]
fn tune_golden_reports_lambda_star() {
    let o = bin().args(["tune"]).arg(golden_path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!((num(&out, "lambda_star") - 17.18).abs() <= 0.5);
    assert_eq!(value(&out, "feasible"), "true");
    assert_eq!(value(&out, "envelope_valid"), "true");
}

#[test]
fn tune_auto_picks_gains() {
    let dir = TempDir::new().unwrap();
    let mut v = golden();
    v["controller"] = json!({});
    let o = bin().arg("tune").arg(write_config(&dir, "auto.json", &v)).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(value(&out, "gain_source"), "auto");
    assert!((num(&out, "lambda") - 0.99 * num(&out, "lambda_star")).abs() < 1e-6);
}

#[test]
fn tune_without_authority_margin_fails_assumption_1() {
    let dir = TempDir::new().unwrap();
    let mut v = golden();
    v["envelope"]["u_max"] = json!(1.5);
    let o = bin().arg("tune").arg(write_config(&dir, "cam.json", &v)).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(value(&stdout(&o), "failed"), "assumption_1");
}

#[test]
fn tune_with_large_disturbance_names_c0_condition() {
    let dir = TempDir::new().unwrap();
    let mut v = golden();
    v["envelope"]["w_bound"] = json!(500.0);
    v["envelope"].as_object_mut().unwrap().remove("constants");
    for gains in [json!({}), json!({"lambda": 1.0, "lambda_f": 0.001})] {
        v["controller"] = gains;
        let o = bin().arg("tune").arg(write_config(&dir, "big_w.json", &v)).output().unwrap();
        assert_eq!(o.status.code(), Some(2));
        let out = stdout(&o);
        assert!(value(&out, "failed").contains("c0_below_rho_min"), "{out}");
    }
}

#[test]
fn malformed_config_reports_field_path() {
    let dir = TempDir::new().unwrap();
    let mut v = golden();
    v["envelope"]["tau"] = json!("ten");
    let o = bin().arg("tune").arg(write_config(&dir, "bad.json", &v)).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("envelope.tau"), "{}", stderr(&o));

    let mut v = golden();
    v["plant"]["A"] = json!([[1.0, 0.0], [0.0]]);
    let o = bin().arg("tune").arg(write_config(&dir, "ragged.json", &v)).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("plant.A"), "{}", stderr(&o));

    let o = bin().arg("tune").arg(dir.path().join("missing.json")).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unstable_internal_dynamics_is_infeasible() {
    let dir = TempDir::new().unwrap();
    let mut v = golden();
    v["plant"]["A"] = json!([[0.1, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]);
    let o = bin().arg("tune").arg(write_config(&dir, "unstable.json", &v)).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Hurwitz"));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(1));
    assert_eq!(bin().args(["simulate", "x.json"]).output().unwrap().status.code(), Some(1));
}

#[test]
fn quad_step_variable_is_validated_and_used() {
    let o = bin().arg("tune").arg(golden_path()).env("SATGUARD_QUAD_STEP", "abc").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let o = bin().arg("tune").arg(golden_path()).env("SATGUARD_QUAD_STEP", "0.002").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let c1 = num(&stdout(&o), "computed_c1");
    assert!((c1 - 0.0393357).abs() < 1e-6);
}

#[test]
fn simulate_golden_good_gains_meets_bound() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("good.csv");
    let o = bin().arg("simulate").arg(golden_path()).arg("--out").arg(&csv).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(value(&out, "feasible"), "true");
    assert_eq!(value(&out, "invariant_after_entry"), "true");
    assert_eq!(value(&out, "asymptotic_within_bound"), "true");
    assert_eq!(value(&out, "envelope_violations"), "0");
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "t,y,z,u,udot_estimate,udot_window_sup,eta1,eta2,eta3,ell,g,w,region,y_d"
    );
    assert_eq!(text.lines().count(), 1 + 20001);
}

#[test]
fn simulate_bad_gains_flags_violated_conditions() {
    let dir = TempDir::new().unwrap();
    let mut v = short_golden(300.0);
    v["controller"]["lambda"] = json!(170.0);
    let o = bin()
        .arg("simulate")
        .arg(write_config(&dir, "bad.json", &v))
        .arg("--out")
        .arg(dir.path().join("bad.csv"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(value(&out, "theoretical_conditions_violated").contains("lambda_below_star"));
    assert!(num(&out, "ell_excursion_ratio") >= 5.0, "{out}");
    assert_eq!(value(&out, "ell_excursion_degraded"), "true");
}

#[test]
fn simulate_zero_disturbance_tracks() {
    let dir = TempDir::new().unwrap();
    let o = bin()
        .arg("simulate")
        .arg(write_config(&dir, "zero.json", &zero_disturbance()))
        .arg("--out")
        .arg(dir.path().join("zero.csv"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(num(&stdout(&o), "asymptotic_error") < 1e-6);
}

#[test]
fn simulate_is_byte_for_byte_deterministic() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "short.json", &short_golden(100.0));
    let mut outputs = Vec::new();
    for (i, seq) in [(0, false), (1, true)] {
        let csv = dir.path().join(format!("run{i}.csv"));
        let mut c = bin();
        if seq {
            c.arg("--sequential");
        }
        let o = c.arg("simulate").arg(&cfg).arg("--out").arg(&csv).output().unwrap();
        assert_eq!(o.status.code(), Some(0));
        outputs.push(std::fs::read(&csv).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn integration_fault_exits_3() {
    let dir = TempDir::new().unwrap();
    let mut v = golden();
    v["plant"] = json!({
        "A": [[-1000.0]], "B1": [[0.0]], "B2": [[0.0]], "C": [[1.0]],
        "alpha_true": 0.2, "eta0": [1.0]
    });
    v["envelope"]["w_bound"] = json!(0.0);
    v["envelope"]["constants"] = json!({"c0": 0.05, "c1": 0.07, "d0": 0.2, "d1": 0.42});
    v["signals"]["w"] = json!({"kind": "constant", "value": 0.0});
    v["sim"] = json!({"t_end": 100.0, "step": 1.0, "record_every": 1});
    let o = bin()
        .arg("simulate")
        .arg(write_config(&dir, "stiff.json", &v))
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("integration fault at t ="));
}

fn read_sweep(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(
        r.headers().unwrap().iter().collect::<Vec<_>>(),
        ["lambda", "phi", "lambda_f_bound", "delta_u", "error_bound", "feasible"]
    );
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn sweep_sign_structure_matches_lambda_star() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("sweep.csv");
    let o = bin()
        .arg("sweep")
        .arg(golden_path())
        .args(["--lambda-min", "0.2", "--lambda-max", "47", "--points", "200", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let tune = stdout(&bin().arg("tune").arg(golden_path()).output().unwrap());
    let star = num(&tune, "lambda_star");
    let step = (47.0 - 0.2) / 199.0;
    let rows = read_sweep(&csv);
    assert_eq!(rows.len(), 200);
    for r in &rows {
        let (l, phi): (f64, f64) = (r[0].parse().unwrap(), r[1].parse().unwrap());
        let feasible = r[5] == "true";
        if (l - star).abs() > step {
            assert_eq!(phi > 0.0, l < star, "lambda {l}");
        }
        let bound: f64 = r[4].parse().unwrap();
        assert_eq!(bound.is_finite(), feasible);
    }
}

#[test]
fn single_point_sweep_matches_tune() {
    let dir = TempDir::new().unwrap();
    let csv = dir.path().join("one.csv");
    let o = bin()
        .arg("sweep")
        .arg(golden_path())
        .args(["--lambda-min", "17", "--lambda-max", "17", "--points", "1", "--out"])
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let mut v = golden();
    v["controller"] = json!({"lambda": 17.0});
    let cfg = write_config(&dir, "l17.json", &v);
    let tune = stdout(&bin().arg("tune").arg(cfg).output().unwrap());
    let row = &read_sweep(&csv)[0];
    assert_eq!(row[1], value(&tune, "phi"));
    assert_eq!(row[2], value(&tune, "lambda_f_bound"));
    assert_eq!(row[3], value(&tune, "delta_u"));
    assert_eq!(row[4], value(&tune, "error_bound"));
}

#[test]
fn sweep_without_feasible_points_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = bin()
        .arg("sweep")
        .arg(golden_path())
        .args(["--lambda-min", "20", "--lambda-max", "40", "--points", "50", "--out"])
        .arg(dir.path().join("none.csv"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    let o = bin()
        .arg("sweep")
        .arg(golden_path())
        .args(["--lambda-min", "1", "--lambda-max", "60", "--points", "5", "--out"])
        .arg(dir.path().join("beyond.csv"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_golden_good_gains_passes() {
    let o = bin().arg("verify").arg(golden_path()).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).lines().last().unwrap().ends_with("pass"));
}

#[test]
fn verify_bad_gains_reports_precondition_failures() {
    let dir = TempDir::new().unwrap();
    let mut v = short_golden(300.0);
    v["controller"]["lambda"] = json!(170.0);
    let o = bin().arg("verify").arg(write_config(&dir, "bad.json", &v)).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
    let out = stdout(&o);
    assert!(out.contains("FAIL precondition lambda_below_star"));
    assert!(out.contains("INFO region convergence"));
    assert!(out.contains("INFO ell_excursion_ratio"));
}

#[test]
fn verify_pure_case_needs_explicit_gains_then_passes() {
    let dir = TempDir::new().unwrap();
    let mut v = zero_disturbance();
    v["controller"] = json!({});
    let o = bin().arg("verify").arg(write_config(&dir, "pure.json", &v)).output().unwrap();
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    // c1 = 0 leaves lambda* unbounded, so gains must be explicit
    v["controller"] = json!({"lambda": 2.0, "lambda_f": 0.05});
    let o = bin().arg("verify").arg(write_config(&dir, "pure.json", &v)).output().unwrap();
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.lines().any(|l| l.starts_with("PASS") && l.contains("envelope")), "{out}");
}
