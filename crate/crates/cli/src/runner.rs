//! End-to-end scenario execution: runs the requested method(s), collects
//! per-report diagnostics, detects steadiness and travelling waves,
//! classifies the final state, and optionally fits a bump layout to it.

use aggdiff_core::density::{
    density_from_particles, pseudo_inverse_centered, wasserstein, wasserstein1_exact, Density1D,
    SpeciesPair,
};
use aggdiff_core::fv::FvWorkspace;
use aggdiff_core::particles::{integrate_rk23, PositionSample, DEFAULT_ATOL, DEFAULT_RTOL};
use aggdiff_core::steady::{
    analyze, classify, solve_centers, BumpAnalysis, BumpLayout, BumpSet, Classification,
    SUPPORT_TOL_DEFAULT,
};
use aggdiff_core::{PerSpecies, PseudoInverse};
use serde::Serialize;

use crate::scenario::{Method, PreparedScenario, Scenario};
use crate::CliError;

/// Steadiness detector window (time units).
pub const STEADY_WINDOW: f64 = 5.0;
/// Steadiness detector tolerance (fraction of the domain scale).
pub const STEADY_TOL: f64 = 1e-4;
/// Default CFL number of the finite-volume stepping.
pub const DEFAULT_CFL: f64 = 0.45;

/// One row of the diagnostics series.
#[derive(Clone, Copy, Debug)]
pub struct DiagRow {
    pub t: f64,
    pub mass_rho: f64,
    pub mass_eta: f64,
    pub cm_rho: f64,
    pub cm_eta: f64,
    pub cm_alpha: f64,
    pub energy: f64,
    pub clipped_mass: f64,
}

/// Everything produced by one method on one scenario.
pub struct MethodOutcome {
    pub diagnostics: Vec<DiagRow>,
    /// Densities at snapshot times (always the initial and final states).
    pub snapshots: Vec<(f64, SpeciesPair<Density1D>)>,
    /// Final state as densities (reconstructed for the particle method).
    pub final_pair: SpeciesPair<Density1D>,
    /// Particle positions per report time (particle method); drives the
    /// position-based steadiness detector.
    pub position_samples: Option<Vec<PositionSample>>,
    /// Densities per report time (finite-volume method); drives the
    /// transport-distance steadiness detector.
    pub density_samples: Option<Vec<(f64, SpeciesPair<Density1D>)>>,
    /// Raw particle positions per report time (particle method only).
    pub particle_trajectory: Option<ParticleTrajectory>,
}

/// `(t, rho positions, eta positions)` per report time.
pub type ParticleTrajectory = Vec<(f64, Vec<f64>, Vec<f64>)>;

impl MethodOutcome {
    /// Earliest report time after which nothing moves by more than
    /// `tol * domain-length` anywhere in a `window`: particle positions in
    /// the sup norm for the particle method, exact per-species transport
    /// distance for the finite-volume method (quantiles of cell-averaged
    /// multi-bump states jump across vacuum gaps on rounding noise, so the
    /// sup norm of quantile positions is not usable there).
    pub fn steady_time(&self, window: f64, tol: f64, domain_length: f64) -> Option<f64> {
        if let Some(samples) = &self.position_samples {
            return aggdiff_core::particles::steady_detect(samples, window, tol);
        }
        let samples = self.density_samples.as_ref()?;
        let budget = tol * domain_length;
        let last_t = samples.last().map(|s| s.0)?;
        'outer: for (a, (t0, base)) in samples.iter().enumerate() {
            if last_t < t0 + window - 1e-9 {
                return None;
            }
            for (t, pair) in &samples[a..] {
                if *t > t0 + window + 1e-9 {
                    break;
                }
                let moved = wasserstein1_exact(&base.rho, &pair.rho)
                    .and_then(|wr| Ok(wr.max(wasserstein1_exact(&base.eta, &pair.eta)?)));
                match moved {
                    Ok(m) if m <= budget => {}
                    _ => continue 'outer,
                }
            }
            return Some(*t0);
        }
        None
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationRepr {
    Mixed,
    Separated,
    MultiBump { n_rho: usize, n_eta: usize },
    Indeterminate,
}

impl From<Classification> for ClassificationRepr {
    fn from(c: Classification) -> Self {
        match c {
            Classification::Mixed => ClassificationRepr::Mixed,
            Classification::Separated => ClassificationRepr::Separated,
            Classification::MultiBump { n_rho, n_eta } => {
                ClassificationRepr::MultiBump { n_rho, n_eta }
            }
            Classification::Indeterminate => ClassificationRepr::Indeterminate,
        }
    }
}

/// Least-squares drift fit of both centres of mass over the last half of the
/// run.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct WaveFit {
    pub speed_rho: f64,
    pub speed_eta: f64,
    pub r2_rho: f64,
    pub r2_eta: f64,
}

/// Summary written to `report.json`.
#[derive(Serialize)]
pub struct RunReport {
    pub classification: ClassificationRepr,
    pub steady_time: Option<f64>,
    pub wave: Option<WaveFit>,
    pub w1_rho: Option<f64>,
    pub w1_eta: Option<f64>,
    pub masses: MassReport,
    /// Absolute joint-centre drift divided by the final time.
    pub cm_alpha_drift: f64,
}

#[derive(Serialize)]
pub struct MassReport {
    pub rho: f64,
    pub eta: f64,
}

/// Bump layout fitted to the final state (written to `layout.json` /
/// `analysis.json` when requested).
pub struct SteadyAnalysisOutcome {
    pub layout: BumpLayout,
    pub alpha: f64,
    pub analysis: Option<BumpAnalysis>,
    pub solver_error: Option<String>,
}

pub struct RunOutcome {
    pub scenario: Scenario,
    pub fv: Option<MethodOutcome>,
    pub particles: Option<MethodOutcome>,
    pub report: RunReport,
    pub steady_analysis: Option<SteadyAnalysisOutcome>,
}

impl RunOutcome {
    /// Finite-volume output when present, otherwise the particle output.
    pub fn preferred(&self) -> &MethodOutcome {
        self.fv.as_ref().or(self.particles.as_ref()).expect("run produced no method outcome")
    }
}

/// Command-line overrides applied on top of a scenario file.
#[derive(Clone, Copy, Debug, Default)]
pub struct RunOptions {
    pub method: Option<Method>,
    pub t_final: Option<f64>,
    pub report_dt: Option<f64>,
    /// Extra snapshot cadence; initial and final snapshots are always taken.
    pub snap_dt: Option<f64>,
    pub analyze_steady: bool,
}

/// Runs a scenario end to end.
pub fn run(scenario: &Scenario, options: &RunOptions) -> Result<RunOutcome, CliError> {
    let mut scenario = scenario.clone();
    if let Some(m) = options.method {
        scenario.method = m;
    }
    if let Some(t) = options.t_final {
        scenario.t_final = t;
    }
    if let Some(r) = options.report_dt {
        scenario.report_dt = r;
    }
    let prepared = scenario.prepare()?;

    let fv = match scenario.method {
        Method::Fv | Method::Both => Some(run_fv(&prepared, options.snap_dt)?),
        Method::Particles => None,
    };
    let particles = match scenario.method {
        Method::Particles | Method::Both => Some(run_particles(&prepared, options.snap_dt)?),
        Method::Fv => None,
    };

    let preferred = fv.as_ref().or(particles.as_ref()).expect("at least one method ran");

    let classification =
        classify(&preferred.final_pair.rho, &preferred.final_pair.eta, SUPPORT_TOL_DEFAULT);
    let steady_time = preferred.steady_time(STEADY_WINDOW, STEADY_TOL, prepared.grid.length());
    let wave = wave_fit(&preferred.diagnostics, scenario.t_final);

    let (w1_rho, w1_eta) = match (&fv, &particles) {
        (Some(f), Some(p)) => (
            Some(wasserstein(&f.final_pair.rho, &p.final_pair.rho, 1.0)?),
            Some(wasserstein(&f.final_pair.eta, &p.final_pair.eta, 1.0)?),
        ),
        _ => (None, None),
    };

    let first = preferred.diagnostics.first().expect("diagnostics not empty");
    let last = preferred.diagnostics.last().expect("diagnostics not empty");
    let report = RunReport {
        classification: classification.into(),
        steady_time,
        wave: wave.filter(wave_detected),
        w1_rho,
        w1_eta,
        masses: MassReport {
            rho: last.mass_rho,
            eta: last.mass_eta,
        },
        cm_alpha_drift: (last.cm_alpha - first.cm_alpha).abs() / scenario.t_final,
    };

    let steady_analysis = if options.analyze_steady {
        Some(fit_layout(&prepared, preferred))
    } else {
        None
    };

    Ok(RunOutcome {
        scenario,
        fv,
        particles,
        report,
        steady_analysis,
    })
}

/// Travelling-wave gate: clean linear fits, speeds above noise and equal
/// within 5%.
pub fn wave_detected(w: &WaveFit) -> bool {
    let max_speed = w.speed_rho.abs().max(w.speed_eta.abs());
    w.r2_rho >= 0.99
        && w.r2_eta >= 0.99
        && w.speed_rho.abs() >= 1e-3
        && w.speed_eta.abs() >= 1e-3
        && (w.speed_rho - w.speed_eta).abs() <= 0.05 * max_speed
}

fn run_fv(prepared: &PreparedScenario, snap_dt: Option<f64>) -> Result<MethodOutcome, CliError> {
    let sc = &prepared.scenario;
    let mut ws = FvWorkspace::new(
        prepared.grid,
        prepared.kernels.clone(),
        prepared.alpha,
        prepared.d,
        DEFAULT_CFL,
    )
    .map_err(CliError::from)?;
    let initial = SpeciesPair::new(
        prepared.initial_rho.clone(),
        prepared.initial_eta.clone(),
        prepared.alpha,
        prepared.d,
    )?;

    let mut diagnostics = Vec::new();
    let mut snapshots = Vec::new();
    let mut density_samples = Vec::new();
    ws.simulate(&initial, sc.t_final, sc.report_dt, |t, pair, diag| {
        diagnostics.push(DiagRow {
            t,
            mass_rho: diag.mass_rho,
            mass_eta: diag.mass_eta,
            cm_rho: diag.cm_rho,
            cm_eta: diag.cm_eta,
            cm_alpha: diag.cm_alpha,
            energy: diag.energy,
            clipped_mass: diag.clipped_mass,
        });
        density_samples.push((t, pair.clone()));
        if is_snapshot_time(t, sc.t_final, snap_dt) {
            snapshots.push((t, pair.clone()));
        }
    })
    .map_err(CliError::from)
    .map(|final_pair| MethodOutcome {
        diagnostics,
        snapshots,
        final_pair,
        position_samples: None,
        density_samples: Some(density_samples),
        particle_trajectory: None,
    })
}

fn run_particles(prepared: &PreparedScenario, snap_dt: Option<f64>) -> Result<MethodOutcome, CliError> {
    let sc = &prepared.scenario;
    // Centered quantile initialization: vacuum-gap ties go to the gap
    // midpoint, so mirror-symmetric data start from mirror-symmetric
    // ensembles.
    let initial = SpeciesPair::new(
        pseudo_inverse_centered(&prepared.initial_rho, sc.n_particles)?,
        pseudo_inverse_centered(&prepared.initial_eta, sc.n_particles)?,
        prepared.alpha,
        prepared.d,
    )?;

    let mut diagnostics = Vec::new();
    let mut snapshots = Vec::new();
    let mut samples = Vec::new();
    let mut trajectory = Vec::new();
    let mut observer_error: Option<CliError> = None;

    let end = integrate_rk23(
        &initial,
        &prepared.kernels,
        sc.t_final,
        DEFAULT_RTOL,
        DEFAULT_ATOL,
        sc.report_dt,
        |t, state| {
            if observer_error.is_some() {
                return;
            }
            match particle_diag_row(t, state, prepared) {
                Ok((row, pair)) => {
                    diagnostics.push(row);
                    if is_snapshot_time(t, sc.t_final, snap_dt) {
                        snapshots.push((t, pair));
                    }
                }
                Err(e) => {
                    observer_error = Some(e);
                    return;
                }
            }
            samples.push(PositionSample {
                t,
                rho: state.rho.positions().to_vec(),
                eta: state.eta.positions().to_vec(),
            });
            trajectory.push((
                t,
                state.rho.positions().to_vec(),
                state.eta.positions().to_vec(),
            ));
        },
    )?;
    if let Some(e) = observer_error {
        return Err(e);
    }

    let final_pair = reconstruct(&end, prepared)?;
    Ok(MethodOutcome {
        diagnostics,
        snapshots,
        final_pair,
        position_samples: Some(samples),
        density_samples: None,
        particle_trajectory: Some(trajectory),
    })
}

fn particle_diag_row(
    t: f64,
    state: &SpeciesPair<PseudoInverse>,
    prepared: &PreparedScenario,
) -> Result<(DiagRow, SpeciesPair<Density1D>), CliError> {
    let pair = reconstruct(state, prepared)?;
    let cm_rho = state.rho.mean_position();
    let cm_eta = state.eta.mean_position();
    let energy = aggdiff_core::density::energy(&pair, &pair, &prepared.kernels)?;
    Ok((
        DiagRow {
            t,
            mass_rho: state.rho.mass(),
            mass_eta: state.eta.mass(),
            cm_rho,
            cm_eta,
            cm_alpha: prepared.alpha * cm_rho - cm_eta,
            energy,
            clipped_mass: 0.0,
        },
        pair,
    ))
}

fn reconstruct(
    state: &SpeciesPair<PseudoInverse>,
    prepared: &PreparedScenario,
) -> Result<SpeciesPair<Density1D>, CliError> {
    Ok(SpeciesPair::new(
        density_from_particles(&state.rho, &prepared.grid)?,
        density_from_particles(&state.eta, &prepared.grid)?,
        prepared.alpha,
        prepared.d,
    )?)
}

fn is_snapshot_time(t: f64, t_final: f64, snap_dt: Option<f64>) -> bool {
    let eps = 1e-9 * t_final.max(1.0);
    if t.abs() < eps || (t - t_final).abs() < eps {
        return true;
    }
    match snap_dt {
        Some(dt) if dt > 0.0 => {
            let k = (t / dt).round();
            (t - k * dt).abs() < eps
        }
        _ => false,
    }
}

/// Least-squares linear fits of `cm_rho(t)` and `cm_eta(t)` over the second
/// half of the run.
fn wave_fit(diagnostics: &[DiagRow], t_final: f64) -> Option<WaveFit> {
    let half: Vec<&DiagRow> = diagnostics.iter().filter(|r| r.t >= 0.5 * t_final).collect();
    if half.len() < 3 {
        return None;
    }
    let ts: Vec<f64> = half.iter().map(|r| r.t).collect();
    let (speed_rho, r2_rho) = linear_fit(&ts, &half.iter().map(|r| r.cm_rho).collect::<Vec<_>>());
    let (speed_eta, r2_eta) = linear_fit(&ts, &half.iter().map(|r| r.cm_eta).collect::<Vec<_>>());
    Some(WaveFit {
        speed_rho,
        speed_eta,
        r2_rho,
        r2_eta,
    })
}

/// Returns `(slope, r_squared)`; a perfectly flat series counts as a perfect
/// fit with zero slope.
pub fn linear_fit(ts: &[f64], xs: &[f64]) -> (f64, f64) {
    let n = ts.len() as f64;
    let mean_t = ts.iter().sum::<f64>() / n;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mut stt = 0.0;
    let mut stx = 0.0;
    let mut sxx = 0.0;
    for (t, x) in ts.iter().zip(xs) {
        stt += (t - mean_t) * (t - mean_t);
        stx += (t - mean_t) * (x - mean_x);
        sxx += (x - mean_x) * (x - mean_x);
    }
    let slope = if stt > 0.0 { stx / stt } else { 0.0 };
    if sxx <= 1e-300 {
        return (slope, 1.0);
    }
    let ss_res = sxx - slope * stx;
    (slope, 1.0 - ss_res / sxx)
}

/// Fits a bump layout to the final state: support clusters seed masses and
/// centres, then the equilibrium solve polishes the centres at the observed
/// joint centre of mass.
fn fit_layout(prepared: &PreparedScenario, outcome: &MethodOutcome) -> SteadyAnalysisOutcome {
    let alpha = prepared.alpha;
    let seed_rho = cluster_bumps(&outcome.final_pair.rho);
    let seed_eta = cluster_bumps(&outcome.final_pair.eta);
    let seeded = BumpLayout::new(
        BumpSet {
            masses: seed_rho.0.clone(),
            centers: seed_rho.1.clone(),
        },
        BumpSet {
            masses: seed_eta.0.clone(),
            centers: seed_eta.1.clone(),
        },
    );
    let target = aggdiff_core::steady::layout_joint_center(&seeded, alpha);
    let masses = PerSpecies::new(seed_rho.0, seed_eta.0);
    let guess = PerSpecies::new(seed_rho.1, seed_eta.1);
    match solve_centers(&masses, &prepared.kernels, alpha, target, &guess) {
        Ok(layout) => {
            let analysis = analyze(&layout, &prepared.kernels, alpha);
            SteadyAnalysisOutcome {
                layout,
                alpha,
                analysis: Some(analysis),
                solver_error: None,
            }
        }
        Err(e) => SteadyAnalysisOutcome {
            layout: seeded,
            alpha,
            analysis: None,
            solver_error: Some(e.to_string()),
        },
    }
}

/// Support clusters of a density at the default threshold: per-cluster mass
/// and centre of mass.
pub fn cluster_bumps(density: &Density1D) -> (Vec<f64>, Vec<f64>) {
    let grid = density.grid();
    let max = density.values().iter().cloned().fold(0.0f64, f64::max);
    let threshold = SUPPORT_TOL_DEFAULT * max;
    let mut masses = Vec::new();
    let mut centers = Vec::new();
    let mut i = 0;
    let values = density.values();
    while i < values.len() {
        if values[i] > threshold {
            let mut mass = 0.0;
            let mut first = 0.0;
            while i < values.len() && values[i] > threshold {
                mass += values[i] * grid.dx;
                first += grid.cell_center(i) * values[i] * grid.dx;
                i += 1;
            }
            masses.push(mass);
            centers.push(first / mass);
        } else {
            i += 1;
        }
    }
    (masses, centers)
}
