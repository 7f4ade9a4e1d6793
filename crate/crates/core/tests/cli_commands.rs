use std::fs;
use std::path::{Path, PathBuf};

use qspin::cli::{
    run, DIVERGENCE_CSV, DIVERGENCE_HEADER, EXIT_CONFIG, EXIT_FIT_WINDOW, EXIT_NUMERICAL, EXIT_OK,
    EXIT_UNSETTLED, EXIT_VALIDATION_FAILED, REPORT_TXT, SUMMARY_JSON, SWEEP_CSV, SWEEP_HEADER,
    TRAJECTORY_CSV,
};
use serde_json::Value;
use tempfile::TempDir;

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, json).unwrap();
    path
}

fn qspin(args: &[&str]) -> u8 {
    let mut argv = vec!["qspin"];
    argv.extend_from_slice(args);
    run(argv)
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(out.join(SUMMARY_JSON)).unwrap()).unwrap()
}

const SMALL_SWEEP: &str = r#"{"sweep":{"n_angles":3,"trials_per_angle":4,"base_seed":7}}"#;
const NOISELESS: &str = r#"{"run":{"noise_amp":0}}"#;

#[test]
fn simulate_fixed_points() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", NOISELESS);
    let cfg = cfg.to_str().unwrap();
    let cases = [
        ("0", EXIT_OK, "Up"),
        ("3.141592653589793", EXIT_OK, "Down"),
        ("1.5707963267948966", EXIT_UNSETTLED, "Unsettled"),
    ];
    for (i, (theta, code, outcome)) in cases.into_iter().enumerate() {
        let out = dir.path().join(format!("run{i}"));
        let out_s = out.to_str().unwrap();
        assert_eq!(
            qspin(&[
                "simulate",
                "--config",
                cfg,
                "--out",
                out_s,
                "--mean-theta",
                theta
            ]),
            code
        );
        let s = summary(&out);
        assert_eq!(s["outcome"], outcome);
        assert!(s["manifest"]["config"]["model"].is_object());
    }
}

#[test]
fn trajectory_csv_schema() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"model":{"rows":1,"cols":2},"run":{"t_end":25}}"#,
    );
    let out = dir.path().join("o");
    qspin(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--mean-theta",
        "1.0",
        "--seed",
        "4",
    ]);
    let text = fs::read_to_string(out.join(TRAJECTORY_CSV)).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "t,theta_0,theta_1,omega_0,omega_1,energy"
    );
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|f| f.parse().unwrap()).collect())
        .collect();
    assert!(rows.iter().all(|r| r.len() == 6));
    assert_eq!(rows[0][0], 0.0);
    assert!((rows[1][0] - 0.1).abs() < 1e-12);
    assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
}

#[test]
fn config_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();
    for (i, body) in [r#"{"model":{"rows":0}}"#, r#"{"model":{"rowz":3}}"#, "{"]
        .iter()
        .enumerate()
    {
        let cfg = write_config(dir.path(), &format!("bad{i}.json"), body);
        assert_eq!(
            qspin(&["ensemble", "--config", cfg.to_str().unwrap(), "--out", out]),
            EXIT_CONFIG
        );
    }
    let missing = dir.path().join("missing.json");
    assert_eq!(
        qspin(&[
            "ensemble",
            "--config",
            missing.to_str().unwrap(),
            "--out",
            out
        ]),
        EXIT_CONFIG
    );
    assert_eq!(
        qspin(&["simulate", "--out", out, "--mean-theta", "4.0"]),
        EXIT_CONFIG
    );
    assert_eq!(qspin(&["frobnicate"]), EXIT_CONFIG);
    assert_eq!(qspin(&["simulate", "--out", out]), EXIT_CONFIG);
}

#[test]
fn numerical_failure_exits_four() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"integrator":{"abs_tol":1e-15,"rel_tol":1e-15,"h_init":0.05,"h_min":0.05,"h_max":0.1}}"#,
    );
    let out = dir.path().join("o");
    let code = qspin(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--mean-theta",
        "1.0",
    ]);
    assert_eq!(code, EXIT_NUMERICAL);
}

#[test]
fn ensemble_csv_is_independent_of_threads() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL_SWEEP);
    let mut outputs = Vec::new();
    for threads in ["1", "8", "1"] {
        let out = dir.path().join(format!("p{}-{}", threads, outputs.len()));
        let code = qspin(&[
            "ensemble",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
            "--parallelism",
            threads,
        ]);
        assert_eq!(code, EXIT_OK);
        outputs.push(fs::read(out.join(SWEEP_CSV)).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), SWEEP_HEADER);
    assert_eq!(lines.count(), 3);
}

#[test]
fn manifest_config_reproduces_outputs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "c.json", SMALL_SWEEP);
    let first = dir.path().join("first");
    qspin(&[
        "ensemble",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        first.to_str().unwrap(),
        "--seed",
        "99",
    ]);
    let echoed = summary(&first)["manifest"]["config"].to_string();
    assert!(echoed.contains("\"base_seed\":99"));
    let echo_path = write_config(dir.path(), "echo.json", &echoed);
    let second = dir.path().join("second");
    qspin(&[
        "ensemble",
        "--config",
        echo_path.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(
        fs::read(first.join(SWEEP_CSV)).unwrap(),
        fs::read(second.join(SWEEP_CSV)).unwrap()
    );
    let m = &summary(&second)["manifest"];
    assert!(
        m["version"].is_string() && m["started_at"].is_string() && m["elapsed_seconds"].is_number()
    );
    assert_eq!(m["command"][1], "ensemble");
}

#[test]
fn two_angle_validation_with_ferromagnetic_springs() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"model":{"spring_a":0},"sweep":{"n_angles":2,"trials_per_angle":10}}"#,
    );
    let out = dir.path().join("o");
    let code = qspin(&[
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let report = fs::read_to_string(out.join(REPORT_TXT)).unwrap();
    assert_eq!(code, EXIT_OK, "{report}");
    assert!(report.contains("monotonic: vacuous"));
    let csv = fs::read_to_string(out.join(SWEEP_CSV)).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(rows[0].starts_with("0,10,0,0,1,1,0"), "{csv}");
    assert!(
        rows[1].starts_with("3.141592653589793,0,10,0,0,0,0"),
        "{csv}"
    );
    assert_eq!(summary(&out)["passed"], true);
}

#[test]
fn zero_threshold_fails_validation() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        // odd trial count: the midpoint fraction cannot equal 0.5
        r#"{"model":{"spring_a":0},"sweep":{"n_angles":3,"trials_per_angle":3}}"#,
    );
    let out = dir.path().join("o");
    let code = qspin(&[
        "validate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--threshold",
        "0",
    ]);
    assert_eq!(code, EXIT_VALIDATION_FAILED);
    let report = fs::read_to_string(out.join(REPORT_TXT)).unwrap();
    assert!(report.contains("[FAIL] rms_residual"));
    assert!(report.contains("VALIDATION FAILED"));
}

#[test]
fn lyapunov_fits_injected_series() {
    let dir = TempDir::new().unwrap();
    let mut csv = format!("{DIVERGENCE_HEADER}\n");
    for i in 0..=300 {
        let t = i as f64 * 0.1;
        csv.push_str(&format!("{t},{}\n", 1.2 * t - 40.0));
    }
    let series = write_config(dir.path(), "series.csv", &csv);
    let out = dir.path().join("o");
    let code = qspin(&[
        "lyapunov",
        "--series",
        series.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    let s = summary(&out);
    assert!((s["lambda"].as_f64().unwrap() - 1.2).abs() < 1e-9);
    assert!((s["r_squared"].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(fs::read_to_string(out.join(DIVERGENCE_CSV))
        .unwrap()
        .starts_with(DIVERGENCE_HEADER));
}

#[test]
fn lyapunov_empty_window_exits_five() {
    let dir = TempDir::new().unwrap();
    let series = write_config(
        dir.path(),
        "s.csv",
        &format!("{DIVERGENCE_HEADER}\n0,-18\n0.1,-17.9\n"),
    );
    let out = dir.path().join("o");
    let code = qspin(&[
        "lyapunov",
        "--series",
        series.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_FIT_WINDOW);
    let bad = write_config(dir.path(), "b.csv", "time,value\n0,1\n");
    assert_eq!(
        qspin(&[
            "lyapunov",
            "--series",
            bad.to_str().unwrap(),
            "--out",
            out.to_str().unwrap()
        ]),
        EXIT_CONFIG
    );
}

#[test]
fn lyapunov_sign_follows_damping() {
    let dir = TempDir::new().unwrap();
    for (name, body, positive) in [
        ("free", "{}", true),
        ("damped", r#"{"chaos":{"dissipation":true}}"#, false),
    ] {
        let cfg = write_config(dir.path(), &format!("{name}.json"), body);
        let out = dir.path().join(name);
        assert_eq!(
            qspin(&[
                "lyapunov",
                "--config",
                cfg.to_str().unwrap(),
                "--out",
                out.to_str().unwrap()
            ]),
            EXIT_OK
        );
        let lambda = summary(&out)["lambda"].as_f64().unwrap();
        assert_eq!(lambda > 0.0, positive, "{name}: {lambda}");
        let rows = fs::read_to_string(out.join(DIVERGENCE_CSV))
            .unwrap()
            .lines()
            .count();
        assert_eq!(rows, 302);
    }
}
