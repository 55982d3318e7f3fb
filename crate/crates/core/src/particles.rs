//! Deterministic particle method: finite differences on the pseudo-inverse
//! form of the system.
//!
//! Each species is a vector of quantile particles. Particle `i` moves with
//!
//! ```text
//! dX_i/dt = (d m / 2) (1/dX_{i-1}^2 - 1/dX_i^2)        (zero-padded at the ends)
//!         + m_own  * sum_j S'(X_i - X_j)
//!         + c m_other * sum_j K'(X_i - Y_j)
//! ```
//!
//! with `m = mass/(N-1)` the inter-particle mass, `c = +1` for predators and
//! `c = -alpha` for prey. The reconstructed density on interval `i` is
//! `m / (X_{i+1} - X_i)`, consistent with [`crate::density::density_from_particles`].
//!
//! Time integration uses the Bogacki-Shampine embedded 2(3) pair with PI step
//! control; a step whose result breaks the strict particle ordering is
//! rejected and retried at half the size.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::density::{PseudoInverse, SpeciesPair};
use crate::kernels::{Kernel, KernelTriple};
use crate::{PerSpecies, Species};

/// Particle ensembles of both species plus model parameters.
pub type ParticleState = SpeciesPair<PseudoInverse>;

#[derive(Clone, Debug, PartialEq)]
pub enum ParticleError {
    Invalid(String),
    /// Positions not strictly increasing on entry.
    NotSorted { species: Species, index: usize },
    /// The integrator could not maintain the particle ordering.
    OrderingViolated { t: f64, species: Species, index: usize },
    /// Step size underflowed or the state stopped being finite.
    StepFailure { t: f64 },
}

impl core::fmt::Display for ParticleError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            ParticleError::Invalid(msg) => write!(f, "invalid particle data: {msg}"),
            ParticleError::NotSorted { species, index } => {
                write!(f, "{species:?} positions not strictly increasing at index {index}")
            }
            ParticleError::OrderingViolated { t, species, index } => write!(
                f,
                "particle ordering of {species:?} irrecoverably violated at t={t}, index {index}"
            ),
            ParticleError::StepFailure { t } => write!(f, "integration step failure at t={t}"),
        }
    }
}

impl core::error::Error for ParticleError {}

fn check_sorted(positions: &[f64], species: Species) -> Result<(), ParticleError> {
    for (i, w) in positions.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(ParticleError::NotSorted { species, index: i });
        }
    }
    Ok(())
}

/// Velocities of both species for the current particle configuration.
pub fn particle_rhs(
    state: &ParticleState,
    kernels: &KernelTriple,
) -> Result<PerSpecies<Vec<f64>>, ParticleError> {
    check_sorted(state.rho.positions(), Species::Rho)?;
    check_sorted(state.eta.positions(), Species::Eta)?;
    let mut out = PerSpecies::new(
        vec![0.0; state.rho.len()],
        vec![0.0; state.eta.len()],
    );
    let mut scratch = vec![0.0; 2 * state.rho.len().max(state.eta.len())];
    velocities_into(
        state.rho.positions(),
        state.eta.positions(),
        state.rho.interval_mass(),
        state.eta.interval_mass(),
        state.alpha,
        state.d,
        kernels,
        &mut scratch,
        &mut out.rho,
        &mut out.eta,
    );
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn velocities_into(
    xr: &[f64],
    xe: &[f64],
    m_rho: f64,
    m_eta: f64,
    alpha: f64,
    d: f64,
    kernels: &KernelTriple,
    scratch: &mut [f64],
    vr: &mut [f64],
    ve: &mut [f64],
) {
    vr.fill(0.0);
    ve.fill(0.0);
    if d > 0.0 {
        diffusion_into(xr, m_rho, d, vr);
        diffusion_into(xe, m_eta, d, ve);
    }
    self_interaction_into(xr, m_rho, &kernels.s_rho, scratch, vr);
    self_interaction_into(xe, m_eta, &kernels.s_eta, scratch, ve);
    cross_interaction_into(xr, xe, m_rho, m_eta, alpha, &kernels.k, scratch, vr, ve);
}

/// `(d m / 2) (1/dX_{i-1}^2 - 1/dX_i^2)` with zero-padded reconstructed
/// density outside the ensemble, so boundary particles are pushed outward
/// with finite speed.
fn diffusion_into(xs: &[f64], m: f64, d: f64, out: &mut [f64]) {
    let n = xs.len();
    let coef = 0.5 * d * m;
    let inv2 = |i: usize| {
        let dx = xs[i + 1] - xs[i];
        1.0 / (dx * dx)
    };
    out[0] += coef * (0.0 - inv2(0));
    for i in 1..n - 1 {
        out[i] += coef * (inv2(i - 1) - inv2(i));
    }
    out[n - 1] += coef * inv2(n - 2);
}

/// Arguments beyond this make `exp(-v)` smaller than 3e-20, far below every
/// tolerance in play; the corresponding pairs are skipped.
const GAUSS_CUTOFF: f64 = 45.0;

/// `exp(-v)` for `0 <= v <= GAUSS_CUTOFF`, accurate to a few ulp.
///
/// The pair loops spend almost all their time in the exponential; a plain
/// branch-free polynomial with the power-of-two split is several times
/// faster than the general-purpose `libm` routine, pipelines/vectorizes in
/// the row loops below, and keeps the evaluation strictly even in the pair
/// distance, which the reflection-equivariance checks rely on.
#[inline(always)]
#[allow(clippy::excessive_precision)] // bit-exact Cody-Waite ln2 split
fn exp_neg(v: f64) -> f64 {
    const LN2_HI: f64 = 0.693_147_180_369_123_816_49;
    const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;
    let k = (v * core::f64::consts::LOG2_E + 0.5) as i32;
    let kf = k as f64;
    let r = (v - kf * LN2_HI) - kf * LN2_LO;
    // exp(-r) on |r| <= ln2/2 + eps, degree-12 Taylor evaluated by Horner.
    let p = 1.0
        - r * (1.0
            - r * (0.5
                - r * (1.0 / 6.0
                    - r * (1.0 / 24.0
                        - r * (1.0 / 120.0
                            - r * (1.0 / 720.0
                                - r * (1.0 / 5040.0
                                    - r * (1.0 / 40320.0
                                        - r * (1.0 / 362880.0
                                            - r * (1.0 / 3628800.0
                                                - r * (1.0 / 39916800.0
                                                    - r / 479001600.0)))))))))));
    f64::from_bits(((1023 - k as i64) as u64) << 52) * p
}

/// One row of Gaussian derivative values `c * (xi - xs[j]) * exp(-(..)^2)`,
/// with pairs beyond the cutoff masked to zero. Branch-free body so the
/// compiler can keep the pipeline full.
#[inline(always)]
fn gauss_d1_row(xi: f64, xs: &[f64], c: f64, inv_w2: f64, row: &mut [f64]) {
    for (r, &xj) in row.iter_mut().zip(xs) {
        let u = xi - xj;
        let v = u * u * inv_w2;
        let s = c * u * exp_neg(v.min(GAUSS_CUTOFF));
        *r = if v > GAUSS_CUTOFF { 0.0 } else { s };
    }
}

/// Row sum folded from the two ends inward, grouping `row[j] + row[m-1-j]`.
///
/// Mirroring a particle configuration negates and reverses every row this
/// module produces; because each two-ended group maps onto the group at the
/// same fold position (addition commutes), the folded sum of a mirrored row
/// is the exact floating-point negation of the original. All accumulations
/// below preserve that property, so mirrored runs produce bitwise-mirrored
/// velocities and, with them, identical step-size decisions.
#[inline(always)]
fn symmetric_row_sum(row: &[f64]) -> f64 {
    let m = row.len();
    let half = m / 2;
    let mut acc = 0.0;
    for j in 0..half {
        acc += row[j] + row[m - 1 - j];
    }
    if m % 2 == 1 {
        acc += row[half];
    }
    acc
}

fn self_interaction_into(xs: &[f64], m: f64, kernel: &Kernel, scratch: &mut [f64], out: &mut [f64]) {
    let n = xs.len();
    match kernel.gaussian_parameters() {
        Some((amplitude, width)) => {
            if amplitude == 0.0 {
                return;
            }
            let c = -2.0 * amplitude / (width * width);
            let inv_w2 = 1.0 / (width * width);
            // Full row per particle (the j = i term vanishes); the symmetric
            // fold keeps the sum mirror-exact.
            for i in 0..n {
                let row = &mut scratch[..n];
                gauss_d1_row(xs[i], xs, c, inv_w2, row);
                out[i] += m * symmetric_row_sum(row);
            }
        }
        None => {
            for i in 0..n {
                let xi = xs[i];
                for j in i + 1..n {
                    let s = kernel.d1_raw(xi - xs[j]);
                    out[i] += m * s;
                    out[j] -= m * s;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cross_interaction_into(
    xr: &[f64],
    xe: &[f64],
    m_rho: f64,
    m_eta: f64,
    alpha: f64,
    kernel: &Kernel,
    scratch: &mut [f64],
    vr: &mut [f64],
    ve: &mut [f64],
) {
    // One kernel evaluation per pair feeds both species:
    // predators gain +m_eta K'(X_i - Y_j), prey gain
    // -alpha m_rho K'(Y_j - X_i) = +alpha m_rho K'(X_i - Y_j).
    match kernel.gaussian_parameters() {
        Some((amplitude, width)) => {
            if amplitude == 0.0 {
                return;
            }
            let c = -2.0 * amplitude / (width * width);
            let inv_w2 = 1.0 / (width * width);
            let a_m_rho = alpha * m_rho;
            let (nr, ne) = (xr.len(), xe.len());
            // Predator rows are processed in mirror pairs (t, nr-1-t) and
            // their prey-side contributions added as one group, keeping the
            // accumulation into `ve` mirror-exact; see symmetric_row_sum.
            let (row_lo, rest) = scratch.split_at_mut(ne);
            let row_hi = &mut rest[..ne];
            for t in 0..nr / 2 {
                let (i_lo, i_hi) = (t, nr - 1 - t);
                gauss_d1_row(xr[i_lo], xe, c, inv_w2, row_lo);
                gauss_d1_row(xr[i_hi], xe, c, inv_w2, row_hi);
                vr[i_lo] += m_eta * symmetric_row_sum(row_lo);
                vr[i_hi] += m_eta * symmetric_row_sum(row_hi);
                for (j, v) in ve.iter_mut().enumerate() {
                    *v += a_m_rho * (row_lo[j] + row_hi[j]);
                }
            }
            if nr % 2 == 1 {
                let mid = nr / 2;
                gauss_d1_row(xr[mid], xe, c, inv_w2, row_lo);
                vr[mid] += m_eta * symmetric_row_sum(row_lo);
                for (j, v) in ve.iter_mut().enumerate() {
                    *v += a_m_rho * row_lo[j];
                }
            }
        }
        None => {
            for (i, &xi) in xr.iter().enumerate() {
                let mut acc = 0.0;
                for (j, &yj) in xe.iter().enumerate() {
                    let g = kernel.d1_raw(xi - yj);
                    acc += g;
                    ve[j] += alpha * m_rho * g;
                }
                vr[i] += m_eta * acc;
            }
        }
    }
}

/// Default relative tolerance of the adaptive integrator.
pub const DEFAULT_RTOL: f64 = 1e-6;
/// Default absolute tolerance of the adaptive integrator.
pub const DEFAULT_ATOL: f64 = 1e-9;

/// Integrates the particle system to `t_final` with the embedded
/// Bogacki-Shampine 2(3) pair, sampling `observer` at multiples of
/// `report_dt` and at the final time.
#[allow(clippy::too_many_arguments)]
pub fn integrate_rk23(
    initial: &ParticleState,
    kernels: &KernelTriple,
    t_final: f64,
    rtol: f64,
    atol: f64,
    report_dt: f64,
    mut observer: impl FnMut(f64, &ParticleState),
) -> Result<ParticleState, ParticleError> {
    if !(t_final > 0.0) || !(report_dt > 0.0) || !(rtol > 0.0) || !(atol > 0.0) {
        return Err(ParticleError::Invalid(alloc::format!(
            "t_final, report_dt, rtol, atol must be positive, got ({t_final}, {report_dt}, {rtol}, {atol})"
        )));
    }
    check_sorted(initial.rho.positions(), Species::Rho)?;
    check_sorted(initial.eta.positions(), Species::Eta)?;

    let nr = initial.rho.len();
    let ne = initial.eta.len();
    let m_rho = initial.rho.interval_mass();
    let m_eta = initial.eta.interval_mass();
    let (alpha, d) = (initial.alpha, initial.d);

    let mut y: Vec<f64> = initial
        .rho
        .positions()
        .iter()
        .chain(initial.eta.positions())
        .copied()
        .collect();
    let dim = nr + ne;

    let mut scratch = vec![0.0; 2 * nr.max(ne)];
    let eval = |y: &[f64], out: &mut [f64], scratch: &mut [f64]| {
        let (xr, xe) = y.split_at(nr);
        let (vr, ve) = out.split_at_mut(nr);
        velocities_into(xr, xe, m_rho, m_eta, alpha, d, kernels, scratch, vr, ve);
    };

    let mut state = initial.clone();
    let emit = |t: f64, y: &[f64], state: &mut ParticleState, obs: &mut dyn FnMut(f64, &ParticleState)| {
        state.rho.positions_mut().copy_from_slice(&y[..nr]);
        state.eta.positions_mut().copy_from_slice(&y[nr..]);
        obs(t, state);
    };

    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut ytmp = vec![0.0; dim];
    let mut ynew = vec![0.0; dim];

    eval(&y, &mut k1, &mut scratch);

    let mut t = 0.0;
    let mut report_index = 0usize;
    emit(t, &y, &mut state, &mut observer);
    report_index += 1;

    let max_f = k1.iter().fold(0.0f64, |a, &v| a.max(libm::fabs(v)));
    let max_y = y.iter().fold(0.0f64, |a, &v| a.max(libm::fabs(v)));
    let mut dt = (0.01 * (1.0 + max_y) / (1.0 + max_f)).min(report_dt).min(t_final);

    let mut err_prev = 1.0f64;
    let mut halvings = 0u32;
    let dt_floor = 1e-14 * t_final.max(1.0);

    while t < t_final * (1.0 - 1e-14) {
        let next_report = (report_index as f64 * report_dt).min(t_final);
        let gap = next_report - t;
        if gap <= 1e-13 * t_final.max(1.0) {
            t = next_report;
            emit(t, &y, &mut state, &mut observer);
            report_index += 1;
            continue;
        }
        let h = dt.min(gap);
        if h < dt_floor {
            return Err(ParticleError::StepFailure { t });
        }

        // Bogacki-Shampine stages (FSAL: k1 is f(y)).
        for i in 0..dim {
            ytmp[i] = y[i] + 0.5 * h * k1[i];
        }
        eval(&ytmp, &mut k2, &mut scratch);
        for i in 0..dim {
            ytmp[i] = y[i] + 0.75 * h * k2[i];
        }
        eval(&ytmp, &mut k3, &mut scratch);
        for i in 0..dim {
            ynew[i] = y[i] + h * (2.0 * k1[i] + 3.0 * k2[i] + 4.0 * k3[i]) / 9.0;
        }
        eval(&ynew, &mut k4, &mut scratch);

        let mut err = 0.0f64;
        for i in 0..dim {
            let e = h * (-5.0 / 72.0 * k1[i] + k2[i] / 12.0 + k3[i] / 9.0 - k4[i] / 8.0);
            let scale = atol + rtol * libm::fabs(y[i]).max(libm::fabs(ynew[i]));
            err = err.max(libm::fabs(e) / scale);
        }

        if !err.is_finite() {
            halvings += 1;
            if halvings > 30 {
                return Err(ParticleError::StepFailure { t });
            }
            dt = h * 0.5;
            continue;
        }

        if err <= 1.0 {
            if let Some((species, index)) = ordering_violation(&ynew, nr) {
                halvings += 1;
                if halvings > 30 {
                    return Err(ParticleError::OrderingViolated { t, species, index });
                }
                dt = h * 0.5;
                continue;
            }
            halvings = 0;
            t += h;
            core::mem::swap(&mut y, &mut ynew);
            core::mem::swap(&mut k1, &mut k4);

            // PI controller (error estimator is third order).
            let e = err.max(1e-10);
            let fac = 0.9 * libm::pow(e, -0.7 / 3.0) * libm::pow(err_prev, 0.4 / 3.0);
            dt = h * fac.clamp(0.2, 5.0);
            err_prev = e;

            if t >= next_report - 1e-13 * t_final.max(1.0) {
                t = next_report;
                emit(t, &y, &mut state, &mut observer);
                report_index += 1;
            }
        } else {
            let fac = (0.9 * libm::pow(err, -1.0 / 3.0)).clamp(0.2, 1.0);
            dt = h * fac;
        }
    }

    state.rho.positions_mut().copy_from_slice(&y[..nr]);
    state.eta.positions_mut().copy_from_slice(&y[nr..]);
    Ok(state)
}

fn ordering_violation(y: &[f64], nr: usize) -> Option<(Species, usize)> {
    let (xr, xe) = y.split_at(nr);
    for (i, w) in xr.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Some((Species::Rho, i));
        }
    }
    for (i, w) in xe.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Some((Species::Eta, i));
        }
    }
    None
}

/// One snapshot of the particle positions (or of density quantiles, when the
/// trajectory comes from the finite-volume method).
#[derive(Clone, Debug)]
pub struct PositionSample {
    pub t: f64,
    pub rho: Vec<f64>,
    pub eta: Vec<f64>,
}

/// Earliest sample time `t` such that no position moves by more than
/// `tol * scale` anywhere in `[t, t + window]`, where `scale` is the global
/// position span of the trajectory. `None` if the trajectory never settles
/// (or is too short to verify a full window).
pub fn steady_detect(trajectory: &[PositionSample], window: f64, tol: f64) -> Option<f64> {
    if trajectory.is_empty() {
        return None;
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for s in trajectory {
        for &x in s.rho.iter().chain(s.eta.iter()) {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    let scale = if hi > lo { hi - lo } else { 1.0 };
    let budget = tol * scale;

    'outer: for (a, start) in trajectory.iter().enumerate() {
        let t_end = start.t + window;
        // The window must be fully covered by samples.
        if trajectory.last().map(|s| s.t).unwrap_or(start.t) < t_end - 1e-9 {
            return None;
        }
        for sample in &trajectory[a..] {
            if sample.t > t_end + 1e-9 {
                break;
            }
            let moved = max_abs_diff(&start.rho, &sample.rho).max(max_abs_diff(&start.eta, &sample.eta));
            if moved > budget {
                continue 'outer;
            }
        }
        return Some(start.t);
    }
    None
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |acc, (x, y)| acc.max(libm::fabs(x - y)))
}
