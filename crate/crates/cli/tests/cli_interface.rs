//! End-to-end checks of the `aggdiff` binary: exit codes, file formats, and
//! the steady-state analysis documents.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_aggdiff"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("aggdiff_cli_{tag}"));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn list_names_all_builtins() {
    let out = bin().arg("list").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["initial1", "initial2", "initial1-alpha6", "initial3", "initial4", "initial5"] {
        assert!(text.contains(name), "missing {name} in list output");
    }
}

#[test]
fn unknown_scenario_exits_with_config_error() {
    let out = bin().args(["run", "initial99", "--out", "/tmp/aggdiff_none"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_with_config_error() {
    let dir = temp_dir("badcfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, "{ not json").unwrap();
    let out = bin()
        .args(["run", cfg.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn boundary_contact_exits_with_code_4() {
    // Diffusion quickly pushes the support into the wall of a tight domain.
    let dir = temp_dir("boundary");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("tight.json");
    std::fs::write(
        &cfg,
        r#"{
            "name": "tight",
            "kernels": {
                "s_rho": {"family": "tabulated", "x": [-1.0, 0.0, 1.0], "y": [0.0, 0.0, 0.0]},
                "s_eta": {"family": "tabulated", "x": [-1.0, 0.0, 1.0], "y": [0.0, 0.0, 0.0]},
                "k":     {"family": "tabulated", "x": [-1.0, 0.0, 1.0], "y": [0.0, 0.0, 0.0]}
            },
            "alpha": 1.0,
            "d": 0.5,
            "domain": [-1.0, 1.0],
            "n_cells": 20,
            "n_particles": 20,
            "t_final": 5.0,
            "report_dt": 0.5,
            "initial": {
                "rho": [{"a": -0.9, "b": 0.9, "height": 1.0}],
                "eta": [{"a": -0.2, "b": 0.2, "height": 0.1}]
            },
            "method": "fv"
        }"#,
    )
    .unwrap();
    let out = bin()
        .args(["run", cfg.to_str().unwrap(), "--out", dir.join("out").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn successful_run_writes_documented_files() {
    let dir = temp_dir("files");
    let out = bin()
        .args([
            "run",
            "initial1",
            "--method",
            "both",
            "--out",
            dir.to_str().unwrap(),
            "--t-final",
            "2",
            "--report-dt",
            "1",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    for file in [
        "report.json",
        "fv/diagnostics.csv",
        "fv/snap_0.000000.csv",
        "fv/snap_2.000000.csv",
        "particles/diagnostics.csv",
        "particles/trajectory.csv",
    ] {
        assert!(dir.join(file).exists(), "missing {file}");
    }

    // 17 significant digits in the CSV floats.
    let diag = std::fs::read_to_string(dir.join("fv/diagnostics.csv")).unwrap();
    let second_line = diag.lines().nth(1).unwrap();
    let first_field = second_line.split(',').next().unwrap();
    assert!(
        first_field.contains('e') && first_field.split(['.', 'e']).nth(1).unwrap().len() == 16,
        "unexpected float format {first_field}"
    );

    let traj = std::fs::read_to_string(dir.join("particles/trajectory.csv")).unwrap();
    assert!(traj.starts_with("t,species,index,position\n"));
    assert!(traj.lines().nth(1).unwrap().contains(",rho,0,"));

    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn analyze_steady_documents_match_schema_and_equilibrium() {
    // A short mixed run whose final clusters seed a clean Newton solve.
    let dir = temp_dir("analyze");
    let out = bin()
        .args([
            "run",
            "initial1",
            "--method",
            "fv",
            "--out",
            dir.to_str().unwrap(),
            "--analyze-steady",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let layout: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("layout.json")).unwrap()).unwrap();
    assert!(layout["rho"]["masses"].is_array());
    assert!(layout["rho"]["centers"].is_array());
    assert!(layout["eta"]["masses"].is_array());
    assert_eq!(layout["alpha"].as_f64().unwrap(), 0.1);

    let analysis: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("analysis.json")).unwrap()).unwrap();
    assert!(analysis.get("error").is_none(), "solver error: {analysis}");
    for key in ["B", "D", "lambda", "intervals", "alpha_threshold"] {
        assert!(analysis.get(key).is_some(), "missing {key}");
    }
    // Mixed single bumps: equilibrium residuals at solver tolerance and the
    // co-located threshold alpha < 1.
    for v in analysis["B"]["rho"].as_array().unwrap() {
        assert!(v.as_f64().unwrap().abs() <= 1e-12);
    }
    let threshold = analysis["alpha_threshold"].as_f64().unwrap();
    assert!((threshold - 1.0).abs() < 0.2, "threshold {threshold}");

    let _ = std::fs::remove_dir_all(&dir);
}
