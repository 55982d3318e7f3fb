//! Semi-discrete finite-volume scheme with minmod-limited upwind fluxes and
//! SSP-RK3 time stepping.
//!
//! Interface velocities discretize `-(d rho - S*rho - c K*eta)_x` with the
//! cross coefficient `c = +1` for predators and `c = -alpha` for prey, so the
//! continuum limit of the scheme is the evolution system itself (predators
//! drift towards prey, prey away from predators). The convolution sums are
//! direct `O(n^2)` sums over cell centres through a precomputed symmetric
//! offset table. Boundary fluxes are zero (no-flux); the domain has to be
//! large enough that supports never reach the boundary, and `simulate` fails
//! if they do.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::density::{Density1D, DensityError, Grid1D, SpeciesPair};
use crate::kernels::KernelTriple;
use crate::{PerSpecies, Species};

#[derive(Clone, Debug, PartialEq)]
pub enum FvError {
    Invalid(String),
    GridMismatch,
    /// Positivity clipping exceeded the per-step budget even after halving.
    ExcessiveClipping { t: f64, clipped: f64 },
    /// A boundary cell picked up mass: the domain is too small.
    BoundaryContact { t: f64 },
    /// State stopped being finite (blow-up or invalid data).
    NonFinite { t: f64 },
    Density(DensityError),
}

impl From<DensityError> for FvError {
    fn from(e: DensityError) -> Self {
        FvError::Density(e)
    }
}

impl core::fmt::Display for FvError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            FvError::Invalid(msg) => write!(f, "invalid finite-volume setup: {msg}"),
            FvError::GridMismatch => write!(f, "state grid differs from workspace grid"),
            FvError::ExcessiveClipping { t, clipped } => {
                write!(f, "positivity clipping {clipped:.3e} exceeded budget at t={t}")
            }
            FvError::BoundaryContact { t } => {
                write!(f, "support reached the domain boundary at t={t}")
            }
            FvError::NonFinite { t } => write!(f, "non-finite state at t={t}"),
            FvError::Density(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for FvError {}

/// Minmod limiter: smallest argument if all are positive, largest if all are
/// negative, zero otherwise.
pub fn minmod(a1: f64, a2: f64, a3: f64) -> f64 {
    if a1 > 0.0 && a2 > 0.0 && a3 > 0.0 {
        a1.min(a2).min(a3)
    } else if a1 < 0.0 && a2 < 0.0 && a3 < 0.0 {
        a1.max(a2).max(a3)
    } else {
        0.0
    }
}

/// Per-report diagnostics emitted by [`FvWorkspace::simulate`].
#[derive(Clone, Copy, Debug)]
pub struct FvDiagnostics {
    pub mass_rho: f64,
    pub mass_eta: f64,
    pub cm_rho: f64,
    pub cm_eta: f64,
    /// `alpha * cm_rho - cm_eta`.
    pub cm_alpha: f64,
    /// Relative energy with the reference frozen at the current state.
    pub energy: f64,
    /// Total mass removed by positivity clipping since the start of the run.
    pub clipped_mass: f64,
}

/// Result of one SSP-RK3 step.
#[derive(Clone, Debug)]
pub struct FvStep {
    pub pair: SpeciesPair<Density1D>,
    pub clipped_mass: f64,
}

/// Relative per-step clipping budget; a step clipping more is rejected.
const CLIP_REJECT_REL: f64 = 1e-10;
/// Boundary cells above this value abort the run.
const BOUNDARY_TOL: f64 = 1e-12;

/// Scratch and tables for one simulation on a fixed grid.
pub struct FvWorkspace {
    grid: Grid1D,
    kernels: KernelTriple,
    alpha: f64,
    d: f64,
    cfl: f64,
    tab_s_rho: Vec<f64>,
    tab_s_eta: Vec<f64>,
    tab_k: Vec<f64>,
    conv_self: Vec<f64>,
    conv_cross: Vec<f64>,
    slope: Vec<f64>,
}

impl FvWorkspace {
    pub fn new(
        grid: Grid1D,
        kernels: KernelTriple,
        alpha: f64,
        d: f64,
        cfl: f64,
    ) -> Result<Self, FvError> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(FvError::Invalid(alloc::format!("alpha must be positive, got {alpha}")));
        }
        if !(d >= 0.0) || !d.is_finite() {
            return Err(FvError::Invalid(alloc::format!(
                "diffusion coefficient must be non-negative, got {d}"
            )));
        }
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(FvError::Invalid(alloc::format!("cfl must lie in (0,1], got {cfl}")));
        }
        let n = grid.n_cells;
        let tab_s_rho = crate::density::kernel_table(&kernels.s_rho, grid.dx, n);
        let tab_s_eta = crate::density::kernel_table(&kernels.s_eta, grid.dx, n);
        let tab_k = crate::density::kernel_table(&kernels.k, grid.dx, n);
        Ok(Self {
            grid,
            kernels,
            alpha,
            d,
            cfl,
            tab_s_rho,
            tab_s_eta,
            tab_k,
            conv_self: vec![0.0; n],
            conv_cross: vec![0.0; n],
            slope: vec![0.0; n],
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn kernels(&self) -> &KernelTriple {
        &self.kernels
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    fn check_grid(&self, state: &Density1D) -> Result<(), FvError> {
        if state.grid() != &self.grid {
            return Err(FvError::GridMismatch);
        }
        Ok(())
    }

    /// Interface velocities for one species; `theta[k]` lives between cells
    /// `k-1` and `k`, the outermost interfaces carry zero (no-flux).
    pub fn interface_velocity(
        &mut self,
        rho: &Density1D,
        eta: &Density1D,
        species: Species,
    ) -> Result<Vec<f64>, FvError> {
        self.check_grid(rho)?;
        self.check_grid(eta)?;
        let n = self.grid.n_cells;
        let mut theta = vec![0.0; n + 1];
        self.velocities_into(rho.values(), eta.values(), species, &mut theta);
        Ok(theta)
    }

    fn velocities_into(&mut self, own: &[f64], other: &[f64], species: Species, theta: &mut [f64]) {
        let n = self.grid.n_cells;
        let dx = self.grid.dx;
        let (tab_self, coef) = match species {
            Species::Rho => (&self.tab_s_rho, 1.0),
            Species::Eta => (&self.tab_s_eta, -self.alpha),
        };
        convolve_table(tab_self, own, &mut self.conv_self);
        convolve_table(&self.tab_k, other, &mut self.conv_cross);
        theta[0] = 0.0;
        theta[n] = 0.0;
        for k in 1..n {
            theta[k] = -(self.d / dx) * (own[k] - own[k - 1])
                + (self.conv_self[k] - self.conv_self[k - 1])
                + coef * (self.conv_cross[k] - self.conv_cross[k - 1]);
        }
    }

    /// Minmod-limited upwind fluxes for the given interface velocities;
    /// boundary fluxes are zero and reconstructed face values are clipped at
    /// zero.
    pub fn numerical_flux(&mut self, values: &Density1D, theta: &[f64]) -> Result<Vec<f64>, FvError> {
        self.check_grid(values)?;
        let n = self.grid.n_cells;
        if theta.len() != n + 1 {
            return Err(FvError::Invalid(alloc::format!(
                "expected {} interface velocities, got {}",
                n + 1,
                theta.len()
            )));
        }
        let mut flux = vec![0.0; n + 1];
        self.flux_into(values.values(), theta, &mut flux);
        Ok(flux)
    }

    fn flux_into(&mut self, v: &[f64], theta: &[f64], flux: &mut [f64]) {
        let n = self.grid.n_cells;
        let dx = self.grid.dx;
        self.slope[0] = 0.0;
        self.slope[n - 1] = 0.0;
        for i in 1..n - 1 {
            self.slope[i] = minmod(
                2.0 * (v[i + 1] - v[i]) / dx,
                (v[i + 1] - v[i - 1]) / (2.0 * dx),
                2.0 * (v[i] - v[i - 1]) / dx,
            );
        }
        flux[0] = 0.0;
        flux[n] = 0.0;
        for k in 1..n {
            let east = (v[k - 1] + 0.5 * dx * self.slope[k - 1]).max(0.0);
            let west = (v[k] - 0.5 * dx * self.slope[k]).max(0.0);
            flux[k] = theta[k].max(0.0) * east + theta[k].min(0.0) * west;
        }
    }

    /// Flux-difference time derivatives for both species.
    pub fn rhs(&mut self, pair: &SpeciesPair<Density1D>) -> Result<PerSpecies<Vec<f64>>, FvError> {
        self.check_grid(&pair.rho)?;
        self.check_grid(&pair.eta)?;
        let n = self.grid.n_cells;
        let mut out = PerSpecies::new(vec![0.0; n], vec![0.0; n]);
        let mut theta = vec![0.0; n + 1];
        let mut flux = vec![0.0; n + 1];
        self.rhs_into(
            pair.rho.values(),
            pair.eta.values(),
            Species::Rho,
            &mut theta,
            &mut flux,
            &mut out.rho,
        );
        self.rhs_into(
            pair.rho.values(),
            pair.eta.values(),
            Species::Eta,
            &mut theta,
            &mut flux,
            &mut out.eta,
        );
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn rhs_into(
        &mut self,
        rho: &[f64],
        eta: &[f64],
        species: Species,
        theta: &mut [f64],
        flux: &mut [f64],
        out: &mut [f64],
    ) {
        let (own, other) = match species {
            Species::Rho => (rho, eta),
            Species::Eta => (eta, rho),
        };
        self.velocities_into(own, other, species, theta);
        self.flux_into(own, theta, flux);
        let dx = self.grid.dx;
        for i in 0..self.grid.n_cells {
            out[i] = -(flux[i + 1] - flux[i]) / dx;
        }
    }

    /// One SSP-RK3 step; fails if positivity clipping exceeds the per-step
    /// budget (callers retry with a smaller step).
    pub fn step_ssprk3(&mut self, pair: &SpeciesPair<Density1D>, dt: f64) -> Result<FvStep, FvError> {
        self.check_grid(&pair.rho)?;
        self.check_grid(&pair.eta)?;
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(FvError::Invalid(alloc::format!("dt must be positive, got {dt}")));
        }
        let mut state = RawPair {
            rho: pair.rho.values().to_vec(),
            eta: pair.eta.values().to_vec(),
        };
        let mass0 = mass_of(&state.rho, self.grid.dx) + mass_of(&state.eta, self.grid.dx);
        let clipped = self.advance_raw(&mut state, dt);
        if clipped > CLIP_REJECT_REL * mass0 {
            return Err(FvError::ExcessiveClipping { t: 0.0, clipped });
        }
        let out = SpeciesPair::new(
            Density1D::new(self.grid, state.rho)?,
            Density1D::new(self.grid, state.eta)?,
            pair.alpha,
            pair.d,
        )?;
        Ok(FvStep {
            pair: out,
            clipped_mass: clipped,
        })
    }

    /// Shu-Osher stages on raw value vectors; returns the clipped mass.
    fn advance_raw(&mut self, state: &mut RawPair, dt: f64) -> f64 {
        let n = self.grid.n_cells;
        let mut theta = vec![0.0; n + 1];
        let mut flux = vec![0.0; n + 1];
        let mut l = RawPair {
            rho: vec![0.0; n],
            eta: vec![0.0; n],
        };
        let mut clipped = 0.0;

        let stage = |ws: &mut Self,
                         base: &RawPair,
                         prev: &RawPair,
                         w_base: f64,
                         w_prev: f64,
                         dt_eff: f64,
                         l: &mut RawPair,
                         theta: &mut [f64],
                         flux: &mut [f64],
                         clipped: &mut f64|
         -> RawPair {
            ws.rhs_into(&prev.rho, &prev.eta, Species::Rho, theta, flux, &mut l.rho);
            ws.rhs_into(&prev.rho, &prev.eta, Species::Eta, theta, flux, &mut l.eta);
            let mut next = RawPair {
                rho: vec![0.0; n],
                eta: vec![0.0; n],
            };
            for i in 0..n {
                next.rho[i] = w_base * base.rho[i] + w_prev * (prev.rho[i] + dt_eff * l.rho[i]);
                next.eta[i] = w_base * base.eta[i] + w_prev * (prev.eta[i] + dt_eff * l.eta[i]);
            }
            *clipped += clip_negative(&mut next.rho, ws.grid.dx);
            *clipped += clip_negative(&mut next.eta, ws.grid.dx);
            next
        };

        let u1 = stage(self, state, state, 0.0, 1.0, dt, &mut l, &mut theta, &mut flux, &mut clipped);
        let u2 = stage(self, state, &u1, 0.75, 0.25, dt, &mut l, &mut theta, &mut flux, &mut clipped);
        let u3 = stage(
            self,
            state,
            &u2,
            1.0 / 3.0,
            2.0 / 3.0,
            dt,
            &mut l,
            &mut theta,
            &mut flux,
            &mut clipped,
        );
        *state = u3;
        clipped
    }

    /// Adaptive step size: `cfl * min(dx / max|theta|, dx^2 / (2 d max(rho,eta)))`.
    fn stable_dt(&mut self, state: &RawPair) -> f64 {
        let n = self.grid.n_cells;
        let dx = self.grid.dx;
        let mut theta = vec![0.0; n + 1];
        let mut max_theta = 0.0f64;
        self.velocities_into(&state.rho, &state.eta, Species::Rho, &mut theta);
        for &t in theta.iter() {
            max_theta = max_theta.max(libm::fabs(t));
        }
        self.velocities_into(&state.rho, &state.eta, Species::Eta, &mut theta);
        for &t in theta.iter() {
            max_theta = max_theta.max(libm::fabs(t));
        }
        let mut max_v = 0.0f64;
        for &v in state.rho.iter().chain(state.eta.iter()) {
            max_v = max_v.max(v);
        }
        let adv = if max_theta > 0.0 { dx / max_theta } else { f64::INFINITY };
        let dif = if self.d * max_v > 0.0 {
            dx * dx / (2.0 * self.d * max_v)
        } else {
            f64::INFINITY
        };
        self.cfl * adv.min(dif)
    }

    /// Runs the scheme to `t_final`, sampling `observer` at multiples of
    /// `report_dt` (and at the final time). Returns the final state.
    pub fn simulate(
        &mut self,
        initial: &SpeciesPair<Density1D>,
        t_final: f64,
        report_dt: f64,
        mut observer: impl FnMut(f64, &SpeciesPair<Density1D>, &FvDiagnostics),
    ) -> Result<SpeciesPair<Density1D>, FvError> {
        self.check_grid(&initial.rho)?;
        self.check_grid(&initial.eta)?;
        if !(t_final > 0.0) || !(report_dt > 0.0) {
            return Err(FvError::Invalid(alloc::format!(
                "t_final and report_dt must be positive, got ({t_final}, {report_dt})"
            )));
        }
        let mut state = RawPair {
            rho: initial.rho.values().to_vec(),
            eta: initial.eta.values().to_vec(),
        };
        let mut t = 0.0;
        let mut clipped_total = 0.0;
        let mut report_index = 0usize;

        self.emit(&state, t, clipped_total, initial.alpha, initial.d, &mut observer)?;
        report_index += 1;

        while t < t_final * (1.0 - 1e-14) {
            let next_report = (report_index as f64 * report_dt).min(t_final);
            let gap = next_report - t;
            if gap <= 1e-13 * t_final.max(1.0) {
                t = next_report;
                self.emit(&state, t, clipped_total, initial.alpha, initial.d, &mut observer)?;
                report_index += 1;
                continue;
            }
            let mut dt = self.stable_dt(&state);
            if !dt.is_finite() {
                dt = gap;
            }
            dt = dt.min(gap);

            let mut trial = state.clone();
            let mut clipped;
            let mut halvings = 0;
            loop {
                clipped = self.advance_raw(&mut trial, dt);
                let mass0 = mass_of(&state.rho, self.grid.dx) + mass_of(&state.eta, self.grid.dx);
                if clipped <= CLIP_REJECT_REL * mass0 {
                    break;
                }
                halvings += 1;
                if halvings > 20 {
                    return Err(FvError::ExcessiveClipping { t, clipped });
                }
                dt *= 0.5;
                trial = state.clone();
            }
            state = trial;
            clipped_total += clipped;
            t += dt;

            if !state.rho.iter().chain(state.eta.iter()).all(|v| v.is_finite()) {
                return Err(FvError::NonFinite { t });
            }
            let n = self.grid.n_cells;
            if state.rho[0] > BOUNDARY_TOL
                || state.rho[n - 1] > BOUNDARY_TOL
                || state.eta[0] > BOUNDARY_TOL
                || state.eta[n - 1] > BOUNDARY_TOL
            {
                return Err(FvError::BoundaryContact { t });
            }

            if t >= next_report - 1e-13 * t_final.max(1.0) {
                t = next_report;
                self.emit(&state, t, clipped_total, initial.alpha, initial.d, &mut observer)?;
                report_index += 1;
            }
        }

        Ok(SpeciesPair::new(
            Density1D::new(self.grid, state.rho)?,
            Density1D::new(self.grid, state.eta)?,
            initial.alpha,
            initial.d,
        )?)
    }

    fn emit(
        &mut self,
        state: &RawPair,
        t: f64,
        clipped_total: f64,
        alpha: f64,
        d: f64,
        observer: &mut impl FnMut(f64, &SpeciesPair<Density1D>, &FvDiagnostics),
    ) -> Result<(), FvError> {
        let pair = SpeciesPair::new(
            Density1D::new(self.grid, state.rho.clone())?,
            Density1D::new(self.grid, state.eta.clone())?,
            alpha,
            d,
        )?;
        let mass_rho = pair.rho.mass();
        let mass_eta = pair.eta.mass();
        let cm_rho = pair.rho.center_of_mass().unwrap_or(0.0);
        let cm_eta = pair.eta.center_of_mass().unwrap_or(0.0);
        let energy = crate::density::energy(&pair, &pair, &self.kernels)?;
        let diag = FvDiagnostics {
            mass_rho,
            mass_eta,
            cm_rho,
            cm_eta,
            cm_alpha: alpha * cm_rho - cm_eta,
            energy,
            clipped_mass: clipped_total,
        };
        observer(t, &pair, &diag);
        Ok(())
    }
}

#[derive(Clone)]
struct RawPair {
    rho: Vec<f64>,
    eta: Vec<f64>,
}

fn mass_of(values: &[f64], dx: f64) -> f64 {
    let s: f64 = values.iter().sum();
    s * dx
}

fn clip_negative(values: &mut [f64], dx: f64) -> f64 {
    let mut clipped = 0.0;
    for v in values.iter_mut() {
        if *v < 0.0 {
            clipped -= *v;
            *v = 0.0;
        }
    }
    clipped * dx
}

/// Direct symmetric-table convolution without the quadrature weight.
fn convolve_table(table: &[f64], f: &[f64], out: &mut [f64]) {
    let n = f.len();
    for i in 0..n {
        let mut acc = 0.0;
        // Split at i so the offset |i-j| decreases then increases without
        // branching in the inner loops.
        for j in 0..=i {
            acc += table[i - j] * f[j];
        }
        for (j, fj) in f.iter().enumerate().take(n).skip(i + 1) {
            acc += table[j - i] * fj;
        }
        out[i] = acc;
    }
}
