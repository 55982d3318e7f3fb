//! File outputs: diagnostics and snapshot CSVs, the run report, and the
//! fitted layout/analysis JSON documents.
//!
//! All floating-point values in CSV files are printed with 17 significant
//! digits and every writer walks its data in a fixed order, so re-running a
//! scenario reproduces the files byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use aggdiff_core::density::{Density1D, SpeciesPair};
use aggdiff_core::steady::{BumpAnalysis, BumpLayout};
use serde::Serialize;

use crate::runner::{MethodOutcome, RunOutcome, SteadyAnalysisOutcome};
use crate::scenario::Method;
use crate::CliError;

fn fmt_f(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Writes every artifact of a run under `out_dir`. With `method = both` the
/// per-method files go to `out_dir/fv` and `out_dir/particles`; a single
/// method writes at the top level. `report.json` (and the layout documents,
/// when present) always live at the top level.
pub fn export(outcome: &RunOutcome, out_dir: &Path) -> Result<(), CliError> {
    let has_rows = |m: &Option<MethodOutcome>| {
        m.as_ref().map(|m| !m.diagnostics.is_empty()).unwrap_or(false)
    };
    if !has_rows(&outcome.fv) && !has_rows(&outcome.particles) {
        return Err(CliError::EmptyRun);
    }

    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;

    let both = outcome.scenario.method == Method::Both;
    if let Some(fv) = &outcome.fv {
        let dir = method_dir(out_dir, both, "fv")?;
        export_method(fv, &dir)?;
    }
    if let Some(p) = &outcome.particles {
        let dir = method_dir(out_dir, both, "particles")?;
        export_method(p, &dir)?;
    }

    let report = serde_json::to_string_pretty(&outcome.report)
        .map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&out_dir.join("report.json"), &report)?;

    if let Some(analysis) = &outcome.steady_analysis {
        export_layout(analysis, out_dir)?;
    }
    Ok(())
}

fn method_dir(out_dir: &Path, both: bool, name: &str) -> Result<PathBuf, CliError> {
    if !both {
        return Ok(out_dir.to_path_buf());
    }
    let dir = out_dir.join(name);
    fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    Ok(dir)
}

fn export_method(outcome: &MethodOutcome, dir: &Path) -> Result<(), CliError> {
    let mut csv = String::from("t,mass_rho,mass_eta,cm_rho,cm_eta,cm_alpha,energy,clipped_mass\n");
    for row in &outcome.diagnostics {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            fmt_f(row.t),
            fmt_f(row.mass_rho),
            fmt_f(row.mass_eta),
            fmt_f(row.cm_rho),
            fmt_f(row.cm_eta),
            fmt_f(row.cm_alpha),
            fmt_f(row.energy),
            fmt_f(row.clipped_mass),
        );
    }
    write_file(&dir.join("diagnostics.csv"), &csv)?;

    for (t, pair) in &outcome.snapshots {
        write_file(&dir.join(format!("snap_{t:.6}.csv")), &snapshot_csv(pair))?;
    }

    if let Some(trajectory) = &outcome.particle_trajectory {
        let mut csv = String::from("t,species,index,position\n");
        for (t, rho, eta) in trajectory {
            for (i, x) in rho.iter().enumerate() {
                let _ = writeln!(csv, "{},rho,{},{}", fmt_f(*t), i, fmt_f(*x));
            }
            for (i, x) in eta.iter().enumerate() {
                let _ = writeln!(csv, "{},eta,{},{}", fmt_f(*t), i, fmt_f(*x));
            }
        }
        write_file(&dir.join("trajectory.csv"), &csv)?;
    }
    Ok(())
}

/// `x,rho,eta` rows at the cell centres.
pub fn snapshot_csv(pair: &SpeciesPair<Density1D>) -> String {
    let grid = pair.rho.grid();
    let mut csv = String::from("x,rho,eta\n");
    for i in 0..grid.n_cells {
        let _ = writeln!(
            csv,
            "{},{},{}",
            fmt_f(grid.cell_center(i)),
            fmt_f(pair.rho.values()[i]),
            fmt_f(pair.eta.values()[i]),
        );
    }
    csv
}

#[derive(Serialize)]
struct SpeciesBumpsDoc<'a> {
    masses: &'a [f64],
    centers: &'a [f64],
}

#[derive(Serialize)]
struct LayoutDoc<'a> {
    rho: SpeciesBumpsDoc<'a>,
    eta: SpeciesBumpsDoc<'a>,
    alpha: f64,
}

#[derive(Serialize)]
struct AnalysisDoc<'a> {
    #[serde(flatten)]
    layout: LayoutDoc<'a>,
    #[serde(rename = "B")]
    b: PerSpeciesDoc<Vec<f64>>,
    #[serde(rename = "D")]
    d: PerSpeciesDoc<Vec<f64>>,
    lambda: PerSpeciesDoc<Vec<f64>>,
    intervals: PerSpeciesDoc<Vec<(f64, f64)>>,
    /// `None` (JSON null) means no upper constraint on alpha.
    alpha_threshold: Option<f64>,
}

#[derive(Serialize)]
struct PerSpeciesDoc<T> {
    rho: T,
    eta: T,
}

#[derive(Serialize)]
struct AnalysisErrorDoc<'a> {
    #[serde(flatten)]
    layout: LayoutDoc<'a>,
    error: &'a str,
}

fn layout_doc<'a>(layout: &'a BumpLayout, alpha: f64) -> LayoutDoc<'a> {
    LayoutDoc {
        rho: SpeciesBumpsDoc {
            masses: &layout.rho.masses,
            centers: &layout.rho.centers,
        },
        eta: SpeciesBumpsDoc {
            masses: &layout.eta.masses,
            centers: &layout.eta.centers,
        },
        alpha,
    }
}

fn analysis_doc<'a>(layout: &'a BumpLayout, alpha: f64, analysis: &'a BumpAnalysis) -> AnalysisDoc<'a> {
    AnalysisDoc {
        layout: layout_doc(layout, alpha),
        b: PerSpeciesDoc {
            rho: analysis.b.rho.clone(),
            eta: analysis.b.eta.clone(),
        },
        d: PerSpeciesDoc {
            rho: analysis.d.rho.clone(),
            eta: analysis.d.eta.clone(),
        },
        lambda: PerSpeciesDoc {
            rho: analysis.lambda.rho.clone(),
            eta: analysis.lambda.eta.clone(),
        },
        intervals: PerSpeciesDoc {
            rho: analysis.intervals.rho.clone(),
            eta: analysis.intervals.eta.clone(),
        },
        alpha_threshold: analysis.alpha_threshold.is_finite().then_some(analysis.alpha_threshold),
    }
}

fn export_layout(outcome: &SteadyAnalysisOutcome, out_dir: &Path) -> Result<(), CliError> {
    let layout_json = serde_json::to_string_pretty(&layout_doc(&outcome.layout, outcome.alpha))
        .map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&out_dir.join("layout.json"), &layout_json)?;

    let analysis_json = match (&outcome.analysis, &outcome.solver_error) {
        (Some(analysis), _) => {
            serde_json::to_string_pretty(&analysis_doc(&outcome.layout, outcome.alpha, analysis))
        }
        (None, Some(err)) => serde_json::to_string_pretty(&AnalysisErrorDoc {
            layout: layout_doc(&outcome.layout, outcome.alpha),
            error: err,
        }),
        (None, None) => unreachable!("analysis outcome has either a result or an error"),
    }
    .map_err(|e| CliError::Io(e.to_string()))?;
    write_file(&out_dir.join("analysis.json"), &analysis_json)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::{run, RunOptions};
    use crate::scenario::builtin;

    #[test]
    fn export_rejects_empty_runs() {
        let mut sc = builtin("initial1").unwrap();
        sc.t_final = 1.0;
        sc.method = Method::Fv;
        let mut outcome = run(&sc, &RunOptions::default()).unwrap();
        outcome.fv.as_mut().unwrap().diagnostics.clear();
        let dir = std::env::temp_dir().join("aggdiff_empty_run_test");
        assert!(matches!(export(&outcome, &dir), Err(CliError::EmptyRun)));
    }

    #[test]
    fn export_writes_documented_files() {
        let mut sc = builtin("initial1").unwrap();
        sc.t_final = 1.0;
        sc.report_dt = 0.5;
        sc.method = Method::Fv;
        let outcome = run(&sc, &RunOptions::default()).unwrap();
        let dir = std::env::temp_dir().join("aggdiff_export_test");
        let _ = fs::remove_dir_all(&dir);
        export(&outcome, &dir).unwrap();

        let diag = fs::read_to_string(dir.join("diagnostics.csv")).unwrap();
        assert!(diag.starts_with("t,mass_rho,mass_eta,cm_rho,cm_eta,cm_alpha,energy,clipped_mass\n"));
        assert_eq!(diag.lines().count(), 4); // header + t = 0, 0.5, 1.0

        let snap = fs::read_to_string(dir.join("snap_0.000000.csv")).unwrap();
        assert!(snap.starts_with("x,rho,eta\n"));
        assert_eq!(snap.lines().count(), 72);
        assert!(dir.join("snap_1.000000.csv").exists());

        let report = fs::read_to_string(dir.join("report.json")).unwrap();
        for key in ["classification", "steady_time", "wave", "w1_rho", "masses", "cm_alpha_drift"] {
            assert!(report.contains(key), "missing key {key}");
        }
        let _ = fs::remove_dir_all(&dir);
    }
}
