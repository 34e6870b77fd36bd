use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn saa_clt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_saa-clt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = saa_clt(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn write_config(dir: &TempDir, json: &str) -> String {
    let path = dir.path().join("config.json");
    fs::write(&path, json).unwrap();
    path.to_str().unwrap().to_owned()
}

/// Checks the header and returns the numeric rows.
fn read_csv(path: &Path, header: &str) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(header), "{}", path.display());
    let width = header.split(',').count();
    lines
        .map(|l| {
            let row: Vec<f64> = l.split(',').map(|f| f.parse().unwrap()).collect();
            assert_eq!(row.len(), width, "{}: {l}", path.display());
            row
        })
        .collect()
}

const SMALL_LQR: &str = r#"{
    "problem": {"kind": "lqr", "horizon": 3},
    "grids": {"bounds": [-6.0, 6.0], "nodes": 241, "covariance_nodes": 41},
    "quadrature": {"nodes": 16},
    "mc": {"sample_size": 50, "replications": 2, "stages": [1, 3], "states": [0.0, 1.0], "paths": 1000},
    "output": {"curve_states": [0.5, 1.5]}
}"#;

#[test]
fn lqr_analytic_files() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["lqr-analytic", "--preset", "lqr-paper", "--out", out]);
    let ric = read_csv(&dir.path().join("riccati.csv"), "t,P,K,M,q");
    assert_eq!(ric.len(), 20);
    assert_eq!(ric[19][1], 1.5);
    let law = read_csv(&dir.path().join("asymlaw.csv"), "t,S,c,v");
    let last = &law[19];
    assert!((last[1] - 1.0).abs() < 1e-12 && (last[3] - 0.8).abs() < 1e-12);
    let curves = read_csv(
        &dir.path().join("variance_curves.csv"),
        "t,x,sigma2_asym,sigma2_prop,sigma2_curr",
    );
    assert_eq!(curves.len(), 40);
    for row in &curves {
        assert!((row[3] + row[4] - row[2]).abs() <= 1e-12 * row[2]);
    }
    let at = curves.iter().find(|r| r[0] == 20.0 && r[1] == 0.5).unwrap();
    assert!(at[3].abs() < 1e-15 && (at[4] - 1.05).abs() < 1e-12);
}

#[test]
fn simulate_smoke_run() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL_LQR);
    let out = dir.path().join("out");
    run_ok(&[
        "simulate",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
    ]);
    let errors = read_csv(&out.join("errors.csv"), "replication,t,x,scaled_error");
    assert_eq!(errors.len(), 2 * 4);
    let summary = read_csv(
        &out.join("summary.csv"),
        "t,x,mean,variance,var_ci_halfwidth,ks_stat,qq_corr",
    );
    assert_eq!(summary.len(), 4);
    for (t, x) in [(1, "0"), (1, "1"), (3, "0"), (3, "1")] {
        let hist = read_csv(
            &out.join(format!("hist_t{t}_x{x}.csv")),
            "bin_lo,bin_hi,count",
        );
        assert_eq!(hist.iter().map(|r| r[2]).sum::<f64>(), 2.0);
        read_csv(
            &out.join(format!("qq_t{t}_x{x}.csv")),
            "theoretical,empirical",
        );
    }
    let compare = read_csv(
        &out.join("compare.csv"),
        "t,x,empirical_variance,analytic_variance,ratio",
    );
    assert_eq!(compare.len(), 4);
}

#[test]
fn simulate_inventory_grid_engine_is_centred() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().to_str().unwrap();
    run_ok(&["simulate", "--preset", "inventory-default", "--out", out]);
    let summary = read_csv(
        &dir.path().join("summary.csv"),
        "t,x,mean,variance,var_ci_halfwidth,ks_stat,qq_corr",
    );
    for row in summary {
        assert!(row[2].abs() <= 4.0 * (row[3] / 100.0).sqrt(), "{row:?}");
    }
}

#[test]
fn covariance_files_and_decomposition() {
    let dir = TempDir::new().unwrap();
    let config = write_config(&dir, SMALL_LQR);
    let out = dir.path().join("out");
    run_ok(&[
        "covariance",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
    ]);
    for t in 1..=4 {
        let gamma = read_csv(&out.join(format!("gamma_t{t}.csv")), "node_i,node_j,value");
        assert_eq!(gamma.len(), 41 * 41);
        if t == 4 {
            assert!(gamma.iter().all(|r| r[2] == 0.0));
        }
    }
    let decomp = read_csv(
        &out.join("decomp.csv"),
        "t,x,sigma2_curr,sigma2_prop,sigma2_asym",
    );
    assert_eq!(decomp.len(), 6);
    for row in decomp {
        assert!((row[2] + row[3] - row[4]).abs() <= 1e-12 * row[4].abs().max(1.0));
    }
}

#[test]
fn deterministic_noise_gives_zero_covariance_and_variance() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        r#"{
            "problem": {"kind": "lqr", "horizon": 2, "noise_half_width": 1e-12},
            "grids": {"bounds": [-4.0, 4.0], "nodes": 81, "covariance_nodes": 21},
            "quadrature": {"nodes": 4},
            "mc": {"stages": [1], "paths": 500}
        }"#,
    );
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    run_ok(&["covariance", "--config", &config, "--out", out]);
    run_ok(&["optimal-value", "--config", &config, "--out", out]);
    for t in 1..=3 {
        let gamma = read_csv(
            &Path::new(out).join(format!("gamma_t{t}.csv")),
            "node_i,node_j,value",
        );
        assert!(gamma.iter().all(|r| r[2].abs() < 1e-18), "stage {t}");
    }
    let optval = read_csv(
        &Path::new(out).join("optval.csv"),
        "paths,trajectory_variance,ci_halfwidth,analytic_gamma1",
    );
    assert_eq!(optval[0][0], 500.0);
    assert!(optval[0][1] < 1e-18);
}

#[test]
fn errors_give_nonzero_exit_and_one_json_line() {
    let dir = TempDir::new().unwrap();
    let bad = write_config(
        &dir,
        r#"{"problem": {"kind": "lqr"}, "mc": {"replicatons": 5}}"#,
    );
    let cases: Vec<Vec<&str>> = vec![
        vec!["simulate", "--config", &bad],
        vec!["simulate", "--preset", "no-such-preset"],
        vec!["lqr-analytic", "--preset", "inventory-default"],
        vec!["simulate"],
        vec!["bogus"],
    ];
    for args in cases {
        let out = saa_clt(&args);
        assert!(!out.status.success(), "{args:?}");
        let stderr = String::from_utf8(out.stderr).unwrap();
        let line = stderr.lines().last().unwrap();
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["error"].is_string() && v["message"].is_string(), "{line}");
    }
}

#[test]
fn missing_config_file_is_io_error() {
    let out = saa_clt(&["simulate", "--config", "/nonexistent/config.json"]);
    assert!(!out.status.success());
    let v: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(v["error"], "io");
}
