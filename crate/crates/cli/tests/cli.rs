use std::io::Write;
use std::process::{Command, Output, Stdio};

use qcurv::OdeCoefficients;
use serde_json::Value;

fn qcurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qcurv")).args(args).output().expect("run qcurv")
}

fn qcurv_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_qcurv"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn qcurv");
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).expect("utf-8 stdout")
}

/// Parses CSV stdout into its header and numeric rows.
fn csv_rows(o: &Output) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = stdout(o);
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    (header, rows)
}

fn eps_n(n: u32) -> f64 {
    OdeCoefficients::<f64>::new(n).unwrap().eps_n
}

#[test]
fn table_near_the_cylinder() {
    let o = qcurv(&["table", "--n", "5", "--eps-grid", "0.999:0.999:1"]);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = csv_rows(&o);
    assert_eq!(header, ["eps_rel", "eps_abs", "kappa", "period", "ham_level", "pohozaev"]);
    assert_eq!(rows.len(), 2, "one grid row and the eps_n footer");
    let c = OdeCoefficients::<f64>::new(5).unwrap();
    assert_eq!(rows[1][1], c.eps_n);
    assert!((rows[1][4] / c.cylinder_energy() - 1.0).abs() < 1e-14);
    // the gap to the cylinder level is the quadratic energy of the small oscillation
    let delta = c.eps_n - rows[0][1];
    let omega2 = c.linearized_frequency().powi(2);
    let predicted = 0.5 * delta * delta * (omega2 * omega2 + c.c0 * (c.p - 1.0));
    let gap = rows[0][4] - rows[1][4];
    assert!((gap / predicted - 1.0).abs() < 0.01, "gap {gap:e}, predicted {predicted:e}");
}

#[test]
fn table_pohozaev_increases_as_eps_decreases() {
    let o = qcurv(&["table", "--n", "5", "--eps-grid", "0.2:0.8:4"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = csv_rows(&o);
    assert_eq!(rows.len(), 5);
    assert!(rows.windows(2).all(|w| w[0][0] < w[1][0]), "sorted by eps");
    assert!(rows.windows(2).all(|w| w[0][5] > w[1][5]), "pohozaev toward 0 as eps decreases");
    assert!(rows.iter().all(|r| r[5] < 0.0));
}

#[test]
fn table_usage_errors() {
    for grid in ["0.2:0.8:0", "0.2:0.8", "a:b:3", "0.0:0.5:3", "0.5:1.5:3"] {
        let o = qcurv(&["table", "--n", "5", "--eps-grid", grid]);
        assert_eq!(o.status.code(), Some(2), "grid {grid}");
        assert!(o.stdout.is_empty());
    }
    assert_eq!(qcurv(&["table", "--n", "4", "--eps-grid", "0.5:0.5:1"]).status.code(), Some(2));
    assert_eq!(qcurv(&["table", "--bogus"]).status.code(), Some(2));
}

#[test]
fn table_json_and_jobs_agree() {
    let a = qcurv(&["table", "--n", "6", "--eps-grid", "0.3:0.9:4", "--format", "json", "--jobs", "1"]);
    let b = Command::new(env!("CARGO_BIN_EXE_qcurv"))
        .args(["table", "--n", "6", "--eps-grid", "0.3:0.9:4", "--format", "json"])
        .env("QCURV_JOBS", "3")
        .output()
        .unwrap();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout, "output independent of the thread count");
    let v: Value = serde_json::from_slice(&a.stdout).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 5);
    for key in ["eps_rel", "eps_abs", "kappa", "period", "ham_level", "pohozaev"] {
        assert!(rows[0][key].is_f64(), "{key}");
    }
}

#[test]
fn orbit_two_periods() {
    let o = qcurv(&["orbit", "--n", "5", "--eps", "0.5", "--periods", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(!text.contains('\r'));
    let (header, rows) = csv_rows(&o);
    assert_eq!(header, ["t", "v", "dv", "d2v", "d3v", "ham_drift"]);
    assert_eq!(rows.len(), 2 * 1024 + 1);
    let eps = 0.5 * eps_n(5);
    let min = rows.iter().map(|r| r[1]).fold(f64::INFINITY, f64::min);
    assert!((min - eps).abs() < 1e-12);
    assert!(rows.windows(2).all(|w| w[1][5] >= w[0][5] && w[1][0] > w[0][0]));
    assert!(rows.last().unwrap()[5] <= 1e-8);
    assert_eq!(rows[0][1..5], rows[2048][1..5]);
}

#[test]
fn orbit_of_the_cylinder_is_constant() {
    let o = qcurv(&["orbit", "--n", "7", "--eps", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = csv_rows(&o);
    let e = eps_n(7);
    assert!(rows.iter().all(|r| r[1] == e && r[2] == 0.0 && r[3] == 0.0 && r[4] == 0.0 && r[5] == 0.0));
}

#[test]
fn orbit_to_a_file() {
    let dir = std::env::temp_dir().join(format!("qcurv-orbit-{}", std::process::id()));
    let path = dir.with_extension("json");
    let o = qcurv(&["orbit", "--n", "6", "--eps", "0.3", "--format", "json", "--out", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let v: Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();
    assert_eq!(v.as_array().unwrap().len(), 1025);
    std::fs::remove_file(path).ok();
}

#[test]
fn poho_inverse_endpoint_and_range() {
    let c = OdeCoefficients::<f64>::new(5).unwrap();
    let p_cyl = c.sphere_area * c.cylinder_energy();
    let o = qcurv(&["poho-inverse", "--n", "5", "--format", "json", "--", &p_cyl.to_string()]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["eps_abs"].as_f64().unwrap() / c.eps_n - 1.0).abs() < 1e-12);

    for p in ["1", "0", "-100"] {
        let o = qcurv(&["poho-inverse", "--n", "5", "--", p]);
        assert_eq!(o.status.code(), Some(3), "P = {p}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("admissible interval"));
        assert!(o.stdout.is_empty());
    }
}

#[test]
fn poho_inverse_round_trips_table_values() {
    let (_, rows) = csv_rows(&qcurv(&["table", "--n", "6", "--eps-grid", "0.2:0.9:3"]));
    for r in &rows[..3] {
        let o = qcurv(&["poho-inverse", "--n", "6", "--", &r[5].to_string()]);
        assert_eq!(o.status.code(), Some(0));
        let (header, back) = csv_rows(&o);
        assert_eq!(header, ["pohozaev", "eps_rel", "eps_abs", "pohozaev_check"]);
        assert!((back[0][1] / r[0] - 1.0).abs() < 1e-6);
        assert!((back[0][3] / r[5] - 1.0).abs() < 1e-10);
    }
}

#[test]
fn synth_then_fit_recovers_parameters() {
    let s = qcurv(&["synth", "--n", "5", "--eps", "0.6", "--phase", "0.35", "--a", "0.3"]);
    assert_eq!(s.status.code(), Some(0));
    let o = qcurv_stdin(&["fit", "--n", "5"], &s.stdout);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in ["eps_hat", "T_hat", "a_hat", "beta_hat", "residual", "diagnostics"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    let d = &v["diagnostics"];
    let rel = d["eps_rel"].as_f64().unwrap();
    let period = d["period"].as_f64().unwrap();
    assert!((rel / 0.6 - 1.0).abs() < 1e-4);
    assert!((v["T_hat"].as_f64().unwrap() / (0.35 * period) - 1.0).abs() < 1e-4);
    assert!((v["a_hat"].as_f64().unwrap() / 0.3 - 1.0).abs() < 1e-3);
    assert!(v["beta_hat"].as_f64().unwrap() >= 1.9);
}

#[test]
fn fit_without_translation() {
    let s = qcurv(&["synth", "--n", "6", "--eps", "0.4", "--phase", "0.6"]);
    let o = qcurv_stdin(&["fit", "--n", "6"], &s.stdout);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["a_hat"].as_f64().unwrap().abs() <= 1e-6);
}

#[test]
fn fit_rejects_bad_input() {
    assert_eq!(qcurv_stdin(&["fit"], b"garbage\n").status.code(), Some(2));
    assert_eq!(qcurv_stdin(&["fit"], b"t,s,v\n1,0,abc\n").status.code(), Some(2));
    let s = stdout(&qcurv(&["synth", "--n", "5", "--eps", "0.5"]));
    let zeroed: String = s
        .lines()
        .enumerate()
        .map(|(i, l)| if i == 0 { format!("{l}\n") } else { format!("{},0\n", l.rsplit_once(',').unwrap().0) })
        .collect();
    let o = qcurv_stdin(&["fit"], zeroed.as_bytes());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("positive"));
    assert!(o.stdout.is_empty());
}

#[test]
fn fit_reports_non_convergence() {
    // a mean mode no Delaunay orbit follows
    let mut csv = String::from("t,s,v\n");
    for i in 0..24 {
        let t = 3.0 + 0.25 * i as f64;
        for j in 0..10 {
            let s = -1.0 + 2.0 * j as f64 / 9.0;
            csv.push_str(&format!("{t},{s},{}\n", 1.0 + 0.5 * (3.0 * t).sin() + 0.1 * t));
        }
    }
    let o = qcurv_stdin(&["fit", "--n", "5"], csv.as_bytes());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["diagnostics"]["converged"], Value::Bool(false));
    assert!(v["eps_hat"].is_f64());
}

#[test]
fn check_sensitivity_to_tolerance() {
    let field = |o: &Output, name: &str| -> (bool, String) {
        let text = stdout(o);
        let line = text.lines().find(|l| l.starts_with(name)).unwrap_or_else(|| panic!("{name} missing")).to_string();
        let mut parts = line.splitn(3, ',');
        parts.next();
        (parts.next() == Some("true"), parts.next().unwrap_or_default().to_string())
    };
    let good = qcurv(&["check", "--n", "6"]);
    let bad = qcurv(&["check", "--n", "6", "--rel-tol", "1e-2"]);
    assert!(field(&good, "delaunay.orbit_conservation").0);
    assert!(!field(&bad, "delaunay.orbit_conservation").0);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("FAIL delaunay.orbit_conservation"));
    // at n = 5 the step cap keeps the drift small, but it still grows by orders of magnitude
    let drift = |o: &Output| -> f64 {
        let d = field(o, "ode.conservation_v_sph").1;
        d.trim_matches('"').split_whitespace().nth(1).unwrap().trim_end_matches(',').parse().unwrap()
    };
    let (g5, b5) = (qcurv(&["check", "--n", "5"]), qcurv(&["check", "--n", "5", "--rel-tol", "1e-2"]));
    assert!(drift(&b5) > 100.0 * drift(&g5));
}

#[test]
fn check_report_format() {
    let o = qcurv(&["check", "--n", "8", "--format", "json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), qcurv::checks::check_names().len());
    assert!(rows.iter().all(|r| r["name"].is_string() && r["pass"].is_boolean() && r["detail"].is_string()));
    // timings only go to stderr
    assert!(!stdout(&o).contains("seconds"));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.lines().filter(|l| l.starts_with("PASS ") || l.starts_with("FAIL ")).count() == rows.len());
    let failing = rows.iter().any(|r| r["pass"] == Value::Bool(false));
    assert_eq!(o.status.code(), Some(if failing { 1 } else { 0 }));
}
