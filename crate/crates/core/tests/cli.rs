use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sica::cli::{emit_plot_script, PlotKind};

fn sica(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sica"))
        .args(args)
        .current_dir(dir)
        .env_remove("SOURCE_DATE_EPOCH")
        .output()
        .expect("spawn sica")
}

fn rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn manifest(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn assert_diagnostic(out: &Output, code: i32, kind: &str) {
    assert_eq!(out.status.code(), Some(code), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error kind={kind} code={code} message=\"")), "{err}");
}

#[test]
fn simulate_rk4_default() {
    let dir = tempfile::tempdir().unwrap();
    let out = sica(dir.path(), &["simulate", "--method", "rk4"]);
    assert!(out.status.success());
    let csv = dir.path().join("sica_rk4.csv");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,s,i,c,a\n"));
    assert!(!text.contains('\r'));
    let data = rows(&csv);
    assert_eq!(data.len(), 101);
    let last = data.last().unwrap();
    assert_eq!(last[0], 20.0);
    assert!((last[1..].iter().sum::<f64>() - 1.0).abs() <= 1e-6);
    // Independent RK4 run of the same system.
    let oracle = [0.1583480548375937, 0.08560010690874745, 0.7497278025959281, 0.006324035657730547];
    for j in 0..4 {
        assert!((last[j + 1] - oracle[j]).abs() < 1e-13);
    }
    let m = manifest(&dir.path().join("sica_rk4.manifest.json"));
    assert_eq!(m["command"], "simulate");
    assert_eq!(m["config"]["method"], "rk4");
    assert_eq!(m["config"]["steps"], 100);
    assert!(m["diagnostics"]["simplex_drift"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn simulate_dp45_samples_the_same_grid() {
    let dir = tempfile::tempdir().unwrap();
    assert!(sica(dir.path(), &["simulate", "--method", "dp45", "--out", "dp.csv"]).status.success());
    assert!(sica(dir.path(), &["simulate", "--method", "rk4", "--out", "rk.csv"]).status.success());
    let dp = rows(&dir.path().join("dp.csv"));
    let rk = rows(&dir.path().join("rk.csv"));
    assert_eq!(dp.len(), 101);
    for (a, b) in dp.iter().zip(&rk) {
        assert_eq!(a[0], b[0]);
    }
    let m = manifest(&dir.path().join("dp.manifest.json"));
    assert_eq!(m["integrator"]["adaptive"]["reltol"], 1e-6);
    assert!(m["integrator"]["sampling"].as_str().unwrap().contains("clipped"));
}

#[test]
fn invalid_grid_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("cfg.json"), r#"{"steps": 0}"#).unwrap();
    let out = sica(dir.path(), &["simulate", "--method", "rk4", "--config", "cfg.json"]);
    assert_diagnostic(&out, 2, "invalid-config");
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (name, body) in [
        ("typo.json", r#"{"horizn": 20}"#),
        ("syntax.json", "{"),
        ("params.json", r#"{"params": {"beta": -1}}"#),
        ("simplex.json", r#"{"initial": {"s": 0.5, "i": 0.2, "c": 0.1, "a": 0.1}}"#),
        ("umax.json", r#"{"control": {"u_max": 1.5}}"#),
    ] {
        fs::write(dir.path().join(name), body).unwrap();
        let out = sica(dir.path(), &["optimize", "--config", name]);
        assert_diagnostic(&out, 2, "invalid-config");
    }
    let out = sica(dir.path(), &["simulate"]);
    assert_diagnostic(&out, 2, "invalid-config");
}

#[test]
fn missing_config_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let out = sica(dir.path(), &["compare", "--config", "absent.json"]);
    assert_diagnostic(&out, 4, "io");
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("blocker"), "").unwrap();
    let out = sica(dir.path(), &["simulate", "--method", "euler", "--out", "blocker/x.csv"]);
    assert_diagnostic(&out, 4, "io");
}

#[test]
fn optimize_default() {
    let dir = tempfile::tempdir().unwrap();
    let out = sica(dir.path(), &["optimize", "--plot"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.path().join("sica_optimal.csv");
    let text = fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("t,s,i,c,a,u,lambda1,lambda2,lambda3,lambda4\n"));
    let data = rows(&csv);
    assert_eq!(data.len(), 1001);
    assert!(data.iter().all(|r| (0.0..=0.5).contains(&r[5])));
    assert_eq!(&data.last().unwrap()[6..], &[0.0; 4]);

    let m = manifest(&dir.path().join("sica_optimal.manifest.json"));
    let d = &m["diagnostics"];
    assert_eq!(d["converged"], true);
    assert!(d["iterations"].as_u64().unwrap() <= 500);
    assert!(d["objective"].as_f64().unwrap() > d["objective_uncontrolled"].as_f64().unwrap());
    assert!((d["objective_uncontrolled"].as_f64().unwrap() - 1.7961441958427085).abs() < 1e-12);
    assert!(d["margin"].as_f64().unwrap() >= 0.0);
    assert_eq!(d["margins"].as_array().unwrap().len(), 9);
    assert!(d["maximality_gap"].as_f64().unwrap() <= 1e-9);
    assert!(d["stationarity_residual"].as_f64().unwrap() <= 1e-2);

    for f in ["sica_optimal_uncontrolled.csv", "sica_optimal_compare.gp", "sica_optimal_control.gp"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let control = fs::read_to_string(dir.path().join("sica_optimal_control.gp")).unwrap();
    assert!(control.contains("'sica_optimal.csv' using 1:6"));
}

#[test]
fn zero_bound_matches_uncontrolled_rk4() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("zero.json"), r#"{"control": {"u_max": 0}}"#).unwrap();
    fs::write(dir.path().join("m1000.json"), r#"{"steps": 1000}"#).unwrap();
    assert!(sica(dir.path(), &["optimize", "--config", "zero.json", "--out", "opt.csv"]).status.success());
    assert!(sica(dir.path(), &["simulate", "--method", "rk4", "--config", "m1000.json", "--out", "rk.csv"])
        .status
        .success());
    let opt = rows(&dir.path().join("opt.csv"));
    let rk = rows(&dir.path().join("rk.csv"));
    assert_eq!(opt.len(), rk.len());
    for (a, b) in opt.iter().zip(&rk) {
        assert_eq!(a[5], 0.0);
        for j in 0..5 {
            assert!((a[j] - b[j]).abs() <= 1e-12);
        }
    }
}

#[test]
fn forced_non_convergence_exits_3_with_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"control": {"max_iters": 1, "delta_error": 1e-12}}"#,
    )
    .unwrap();
    let out = sica(dir.path(), &["optimize", "--config", "cfg.json", "--out", "nc.csv"]);
    assert_diagnostic(&out, 3, "numerical-failure");
    let m = manifest(&dir.path().join("nc.manifest.json"));
    assert_eq!(m["diagnostics"]["converged"], false);
    assert_eq!(m["diagnostics"]["iterations"], 1);
    assert!(m["diagnostics"]["margin"].as_f64().unwrap() < 0.0);
}

#[test]
fn adjoint_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = sica(dir.path(), &["optimize", "--adjoint", "verbatim", "--out", "v.csv"]);
    assert!(out.status.success());
    assert_eq!(manifest(&dir.path().join("v.manifest.json"))["config"]["adjoint_mode"], "verbatim");
    let out = sica(dir.path(), &["optimize", "--adjoint", "sideways"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_prints_published_columns() {
    let dir = tempfile::tempdir().unwrap();
    let out = sica(dir.path(), &["compare"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for v in ["0.4495660", "0.0659270", "0.0161175", "0.0151705", "0.0022508", "0.0006695"] {
        assert!(text.contains(v), "{v}");
    }
    assert!(!text.contains("OUT"));
    let csv = fs::read_to_string(dir.path().join("sica_compare.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 36);
    assert!(csv.lines().skip(1).all(|l| l.ends_with(",true")));
}

#[test]
fn compare_with_tight_reference_reports_rk4_outside_band() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("tight.json"), r#"{"reference": "tight"}"#).unwrap();
    let out = sica(dir.path(), &["compare", "--config", "tight.json"]);
    assert!(out.status.success());
    let csv = fs::read_to_string(dir.path().join("sica_compare.csv")).unwrap();
    let rk4_out = csv.lines().filter(|l| l.starts_with("rk4,") && l.ends_with(",false")).count();
    assert!(rk4_out > 0);
    assert!(csv.lines().filter(|l| l.starts_with("euler,")).all(|l| l.ends_with(",true")));
}

#[test]
fn orders_report_passes_bands() {
    let dir = tempfile::tempdir().unwrap();
    let out = sica(dir.path(), &["orders"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches("PASS").count(), 3, "{text}");
    let m = manifest(&dir.path().join("sica_orders.manifest.json"));
    let orders = m["diagnostics"]["orders"].as_array().unwrap();
    assert_eq!(orders.len(), 3);
    assert!(orders.iter().all(|o| o["pass"] == true));

    fs::write(dir.path().join("two.json"), r#"{"refinements": [100, 200]}"#).unwrap();
    assert_eq!(sica(dir.path(), &["orders", "--config", "two.json"]).status.code(), Some(2));
}

#[test]
fn manifest_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"steps": 400, "horizon": 15, "params": {"beta": 1.4}, "control": {"u_max": 0.3}}"#,
    )
    .unwrap();
    let cases: [(&[&str], &str); 2] = [
        (&["simulate", "--method", "rk2", "--config", "cfg.json", "--out", "a.csv"], "a"),
        (&["optimize", "--config", "cfg.json", "--out", "b.csv"], "b"),
    ];
    for (args, stem) in cases {
        assert!(sica(dir.path(), args).status.success());
        let manifest_file = format!("{stem}.manifest.json");
        let rerun_csv = format!("{stem}_again.csv");
        let rerun: Vec<&str> = match args[0] {
            "simulate" => vec!["simulate", "--config", &manifest_file, "--out", &rerun_csv],
            _ => vec!["optimize", "--config", &manifest_file, "--out", &rerun_csv],
        };
        let out = sica(dir.path(), &rerun);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(
            fs::read(dir.path().join(format!("{stem}.csv"))).unwrap(),
            fs::read(dir.path().join(&rerun_csv)).unwrap()
        );
    }
}

#[test]
fn plot_scripts() {
    let dir = tempfile::tempdir().unwrap();
    assert!(sica(dir.path(), &["simulate", "--method", "euler", "--plot"]).status.success());
    let script = fs::read_to_string(dir.path().join("sica_euler_states.gp")).unwrap();
    for col in ["1:2", "1:3", "1:4", "1:5"] {
        assert!(script.contains(&format!("'sica_euler.csv' using {col}")));
    }
    // Identical input, identical script.
    let again = emit_plot_script(&dir.path().join("sica_euler.csv"), PlotKind::States).unwrap();
    assert_eq!(fs::read_to_string(again).unwrap(), script);

    let missing = emit_plot_script(&dir.path().join("absent.csv"), PlotKind::Control).unwrap_err();
    assert_eq!(missing.exit_code(), 4);
    // A state-only CSV has no control column.
    let wrong = emit_plot_script(&dir.path().join("sica_euler.csv"), PlotKind::Control).unwrap_err();
    assert_eq!(wrong.exit_code(), 4);
}

#[test]
fn source_date_epoch_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sica"))
        .args(["simulate", "--method", "rk4"])
        .current_dir(dir.path())
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(
        manifest(&dir.path().join("sica_rk4.manifest.json"))["source_date_epoch"],
        "1700000000"
    );
}
