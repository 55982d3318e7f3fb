//! Constructive multi-bump steady states.
//!
//! A candidate steady state is a family of bumps per species, each carrying a
//! mass `z` and a centre `cm`. The centres must be an equilibrium of the
//! purely nonlocal particle system (`B = 0` below) and the local force
//! gradients `D` must be positive; each bump is then, to leading order in the
//! diffusion coefficient, the Barenblatt parabola
//!
//! ```text
//! (D / 2d) (r^2 - (x - cm)^2)_+ ,   r = d^(1/3) * lambda,
//! lambda = (3 z / 2 D)^(1/3),
//! ```
//!
//! whose mass is exactly `z` for every `d`. At `d = 1` this reduces to the
//! unscaled parabola `(D/2)(lambda^2 - (x-cm)^2)`.
//!
//! The equilibrium system is translation invariant (one linear combination of
//! the equations vanishes identically), so the Newton solver replaces the row
//! with the largest weight in that null combination by the conserved joint
//! centre of mass `alpha * cm_rho - cm_eta = CM_target`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::density::{Density1D, DensityError, Grid1D, SpeciesPair};
use crate::kernels::KernelTriple;
use crate::{PerSpecies, Species};

#[derive(Clone, Debug, PartialEq)]
pub enum SteadyError {
    Invalid(String),
    /// Newton did not reach the residual targets.
    NoConvergence { iterations: usize, max_b: f64 },
    /// Two centres of the same species collided; try fewer bumps.
    CenterCollision { species: Species, index: usize },
    SingularJacobian,
    NonPositiveD { species: Species, index: usize },
    /// Bump intervals of one species overlap (scaled by the requested d).
    DisjointnessViolated { species: Species, index: usize },
    BumpOutsideGrid { species: Species, index: usize },
    EmptySupport { species: Species },
    Density(DensityError),
}

impl From<DensityError> for SteadyError {
    fn from(e: DensityError) -> Self {
        SteadyError::Density(e)
    }
}

impl core::fmt::Display for SteadyError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            SteadyError::Invalid(msg) => write!(f, "invalid steady-state data: {msg}"),
            SteadyError::NoConvergence { iterations, max_b } => {
                write!(f, "Newton failed after {iterations} iterations (max |B| = {max_b:.3e})")
            }
            SteadyError::CenterCollision { species, index } => write!(
                f,
                "{species:?} centres {index} and {} collided; try fewer bumps",
                index + 1
            ),
            SteadyError::SingularJacobian => write!(f, "singular Newton Jacobian"),
            SteadyError::NonPositiveD { species, index } => {
                write!(f, "non-positive D for {species:?} bump {index}")
            }
            SteadyError::DisjointnessViolated { species, index } => write!(
                f,
                "{species:?} bump intervals {index} and {} overlap",
                index + 1
            ),
            SteadyError::BumpOutsideGrid { species, index } => {
                write!(f, "{species:?} bump {index} does not fit the grid")
            }
            SteadyError::EmptySupport { species } => {
                write!(f, "{species:?} has empty support")
            }
            SteadyError::Density(e) => write!(f, "{e}"),
        }
    }
}

impl core::error::Error for SteadyError {}

/// Masses and centres of the bumps of one species, centres sorted.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpSet {
    pub masses: Vec<f64>,
    pub centers: Vec<f64>,
}

impl BumpSet {
    pub fn new(masses: Vec<f64>, centers: Vec<f64>) -> Result<Self, SteadyError> {
        if masses.is_empty() || masses.len() != centers.len() {
            return Err(SteadyError::Invalid(format!(
                "need equally many masses and centres (>= 1), got {} and {}",
                masses.len(),
                centers.len()
            )));
        }
        if masses.iter().any(|z| !(*z > 0.0) || !z.is_finite()) {
            return Err(SteadyError::Invalid("bump masses must be positive".into()));
        }
        if centers.iter().any(|c| !c.is_finite()) {
            return Err(SteadyError::Invalid("bump centres must be finite".into()));
        }
        for w in centers.windows(2) {
            if w[1] < w[0] {
                return Err(SteadyError::Invalid("bump centres must be sorted".into()));
            }
        }
        Ok(Self { masses, centers })
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.masses.iter().sum()
    }
}

/// Bump masses and centres for both species.
#[derive(Clone, Debug, PartialEq)]
pub struct BumpLayout {
    pub rho: BumpSet,
    pub eta: BumpSet,
}

impl BumpLayout {
    pub fn new(rho: BumpSet, eta: BumpSet) -> Self {
        Self { rho, eta }
    }
}

/// First-derivative force sums at the bump centres; zero at equilibrium.
pub fn compute_b(layout: &BumpLayout, kernels: &KernelTriple, alpha: f64) -> PerSpecies<Vec<f64>> {
    PerSpecies::new(
        force_sums(layout, kernels, alpha, Species::Rho, Deriv::First),
        force_sums(layout, kernels, alpha, Species::Eta, Deriv::First),
    )
}

/// Curvature sums `D` at the bump centres; all must be positive for a valid
/// multi-bump state.
pub fn compute_d(layout: &BumpLayout, kernels: &KernelTriple, alpha: f64) -> PerSpecies<Vec<f64>> {
    let mut d = PerSpecies::new(
        force_sums(layout, kernels, alpha, Species::Rho, Deriv::Second),
        force_sums(layout, kernels, alpha, Species::Eta, Deriv::Second),
    );
    for v in d.rho.iter_mut().chain(d.eta.iter_mut()) {
        *v = -*v;
    }
    d
}

#[derive(Clone, Copy)]
enum Deriv {
    First,
    Second,
}

fn force_sums(
    layout: &BumpLayout,
    kernels: &KernelTriple,
    alpha: f64,
    species: Species,
    deriv: Deriv,
) -> Vec<f64> {
    let (own, other, s_kernel) = match species {
        Species::Rho => (&layout.rho, &layout.eta, &kernels.s_rho),
        Species::Eta => (&layout.eta, &layout.rho, &kernels.s_eta),
    };
    let coef = species.cross_coefficient(alpha);
    let mut out = Vec::with_capacity(own.len());
    for i in 0..own.len() {
        let ci = own.centers[i];
        let mut acc = 0.0;
        for j in 0..own.len() {
            let u = ci - own.centers[j];
            acc += match deriv {
                Deriv::First => s_kernel.d1_raw(u),
                Deriv::Second => s_kernel.d2_raw(u),
            } * own.masses[j];
        }
        for j in 0..other.len() {
            let u = ci - other.centers[j];
            acc += coef
                * match deriv {
                    Deriv::First => kernels.k.d1_raw(u),
                    Deriv::Second => kernels.k.d2_raw(u),
                }
                * other.masses[j];
        }
        out.push(acc);
    }
    out
}

/// Joint centre of mass of a layout: `alpha * <cm>_rho - <cm>_eta` with
/// mass-weighted means.
pub fn layout_joint_center(layout: &BumpLayout, alpha: f64) -> f64 {
    let cm = |set: &BumpSet| {
        let mut acc = 0.0;
        for (z, c) in set.masses.iter().zip(&set.centers) {
            acc += z * c;
        }
        acc / set.total_mass()
    };
    alpha * cm(&layout.rho) - cm(&layout.eta)
}

/// Analytic Jacobian of the flattened `B` vector with respect to the
/// flattened centres `[cm_rho.., cm_eta..]`.
pub fn b_jacobian(layout: &BumpLayout, kernels: &KernelTriple, alpha: f64) -> Vec<Vec<f64>> {
    let nr = layout.rho.len();
    let ne = layout.eta.len();
    let n = nr + ne;
    let mut jac = vec![vec![0.0; n]; n];

    let fill = |jac: &mut Vec<Vec<f64>>, species: Species| {
        let (own, other, s_kernel, row0, own_col0, other_col0) = match species {
            Species::Rho => (&layout.rho, &layout.eta, &kernels.s_rho, 0, 0, nr),
            Species::Eta => (&layout.eta, &layout.rho, &kernels.s_eta, nr, nr, 0),
        };
        let coef = species.cross_coefficient(alpha);
        for i in 0..own.len() {
            let ci = own.centers[i];
            let row = &mut jac[row0 + i];
            let mut diag = 0.0;
            for j in 0..own.len() {
                if j == i {
                    continue;
                }
                let s2 = s_kernel.d2_raw(ci - own.centers[j]) * own.masses[j];
                diag += s2;
                row[own_col0 + j] = -s2;
            }
            for j in 0..other.len() {
                let k2 = coef * kernels.k.d2_raw(ci - other.centers[j]) * other.masses[j];
                diag += k2;
                row[other_col0 + j] = -k2;
            }
            row[own_col0 + i] = diag;
        }
    };
    fill(&mut jac, Species::Rho);
    fill(&mut jac, Species::Eta);
    jac
}

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;
const CENTER_COLLISION_TOL: f64 = 1e-9;

/// Damped Newton solve of the equilibrium system `B = 0` with the joint
/// centre of mass pinned to `cm_alpha_target`. One equation is redundant
/// (the mass-weighted combination of all of them vanishes identically); the
/// row with the largest weight in that null combination is replaced by the
/// affine constraint.
///
/// Newton is local: because the forces decay in the kernel tails, guesses
/// that separate interacting bumps by much more than a kernel width can
/// converge to spurious far-field configurations where all residuals fall
/// below tolerance. Place the guessed centres within kernel range of the
/// intended arrangement.
pub fn solve_centers(
    masses: &PerSpecies<Vec<f64>>,
    kernels: &KernelTriple,
    alpha: f64,
    cm_alpha_target: f64,
    initial_guess: &PerSpecies<Vec<f64>>,
) -> Result<BumpLayout, SteadyError> {
    let nr = masses.rho.len();
    let ne = masses.eta.len();
    if nr == 0 || ne == 0 {
        return Err(SteadyError::Invalid("each species needs at least one bump".into()));
    }
    if initial_guess.rho.len() != nr || initial_guess.eta.len() != ne {
        return Err(SteadyError::Invalid("guess size does not match masses".into()));
    }
    let n = nr + ne;
    let z_rho_tot: f64 = masses.rho.iter().sum();
    let z_eta_tot: f64 = masses.eta.iter().sum();

    // Null-combination weights alpha*z_rho^i / -z_eta^j; drop the row where
    // the combination leans hardest.
    let mut replace_row = 0;
    let mut best = -1.0;
    for (i, z) in masses.rho.iter().enumerate() {
        let w = libm::fabs(alpha * z);
        if w > best {
            best = w;
            replace_row = i;
        }
    }
    for (j, z) in masses.eta.iter().enumerate() {
        let w = libm::fabs(*z);
        if w > best {
            best = w;
            replace_row = nr + j;
        }
    }

    // Constraint gradient: d(CM_alpha)/d(centres).
    let mut constraint_grad = vec![0.0; n];
    for (i, z) in masses.rho.iter().enumerate() {
        constraint_grad[i] = alpha * z / z_rho_tot;
    }
    for (j, z) in masses.eta.iter().enumerate() {
        constraint_grad[nr + j] = -z / z_eta_tot;
    }

    let layout_of = |c: &[f64]| -> Result<BumpLayout, SteadyError> {
        let mut rho: Vec<(f64, f64)> = masses.rho.iter().copied().zip(c[..nr].iter().copied()).collect();
        let mut eta: Vec<(f64, f64)> = masses.eta.iter().copied().zip(c[nr..].iter().copied()).collect();
        rho.sort_unstable_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        eta.sort_unstable_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        Ok(BumpLayout::new(
            BumpSet::new(rho.iter().map(|p| p.0).collect(), rho.iter().map(|p| p.1).collect())?,
            BumpSet::new(eta.iter().map(|p| p.0).collect(), eta.iter().map(|p| p.1).collect())?,
        ))
    };

    // Residual of the modified system; the layout is rebuilt unsorted so the
    // association between masses and moving centres stays fixed.
    let residual = |c: &[f64]| -> Result<(Vec<f64>, f64, f64), SteadyError> {
        let layout = raw_layout(masses, c, nr)?;
        let b = compute_b(&layout, kernels, alpha);
        let flat: Vec<f64> = b.rho.iter().chain(b.eta.iter()).copied().collect();
        let max_b = flat.iter().fold(0.0f64, |a, v| a.max(libm::fabs(*v)));
        let mut cm = 0.0;
        for (k, g) in constraint_grad.iter().enumerate() {
            cm += g * c[k];
        }
        let g = cm - cm_alpha_target;
        let mut res = flat;
        res[replace_row] = g;
        Ok((res, max_b, libm::fabs(g)))
    };

    let mut c: Vec<f64> = initial_guess
        .rho
        .iter()
        .chain(initial_guess.eta.iter())
        .copied()
        .collect();
    for (range, species) in [(0..nr, Species::Rho), (nr..n, Species::Eta)] {
        for (i, w) in c[range].windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(SteadyError::Invalid(format!(
                    "{species:?} guess centres must be sorted (index {i})"
                )));
            }
        }
    }

    for iteration in 0..NEWTON_MAX_ITER {
        let (res, max_b, g_abs) = residual(&c)?;
        if max_b <= NEWTON_TOL && g_abs <= NEWTON_TOL {
            return layout_of(&c);
        }

        let layout = raw_layout(masses, &c, nr)?;
        let mut jac = b_jacobian(&layout, kernels, alpha);
        jac[replace_row].copy_from_slice(&constraint_grad);

        let mut delta: Vec<f64> = res.iter().map(|r| -r).collect();
        solve_dense(&mut jac, &mut delta)?;

        // Fraction-to-the-boundary cap: a step may close at most half of any
        // same-species gap, which preserves the centre ordering and keeps
        // Newton from tunnelling through collision configurations.
        let mut lambda_max = 1.0f64;
        for (lo, hi) in [(0, nr), (nr, n)] {
            for i in lo..hi.saturating_sub(1) {
                let closing = delta[i] - delta[i + 1];
                if closing > 0.0 {
                    let gap = c[i + 1] - c[i];
                    lambda_max = lambda_max.min(0.5 * gap / closing);
                }
            }
        }
        if !(lambda_max > 0.0) {
            return Err(SteadyError::NoConvergence {
                iterations: iteration + 1,
                max_b,
            });
        }

        // Armijo backtracking on the squared residual norm.
        let phi0: f64 = res.iter().map(|r| r * r).sum();
        let mut lambda = lambda_max;
        let mut advanced = false;
        for _ in 0..40 {
            let trial: Vec<f64> = c.iter().zip(&delta).map(|(x, dx)| x + lambda * dx).collect();
            let (tres, _, _) = residual(&trial)?;
            let phi: f64 = tres.iter().map(|r| r * r).sum();
            if phi <= (1.0 - 1e-4 * lambda) * phi0 {
                c = trial;
                advanced = true;
                break;
            }
            lambda *= 0.5;
        }
        if !advanced {
            return Err(SteadyError::NoConvergence {
                iterations: iteration + 1,
                max_b,
            });
        }

        check_collisions(&c[..nr], Species::Rho)?;
        check_collisions(&c[nr..], Species::Eta)?;
    }

    let (_, max_b, _) = residual(&c)?;
    Err(SteadyError::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        max_b,
    })
}

fn raw_layout(masses: &PerSpecies<Vec<f64>>, c: &[f64], nr: usize) -> Result<BumpLayout, SteadyError> {
    // Bypass the sortedness check while Newton is iterating.
    if c.iter().any(|x| !x.is_finite()) {
        return Err(SteadyError::Invalid("non-finite centre during solve".into()));
    }
    Ok(BumpLayout {
        rho: BumpSet {
            masses: masses.rho.clone(),
            centers: c[..nr].to_vec(),
        },
        eta: BumpSet {
            masses: masses.eta.clone(),
            centers: c[nr..].to_vec(),
        },
    })
}

fn check_collisions(centers: &[f64], species: Species) -> Result<(), SteadyError> {
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            if libm::fabs(centers[i] - centers[j]) < CENTER_COLLISION_TOL {
                return Err(SteadyError::CenterCollision { species, index: i });
            }
        }
    }
    Ok(())
}

/// Gaussian elimination with partial pivoting, in place.
fn solve_dense(a: &mut [Vec<f64>], b: &mut [f64]) -> Result<(), SteadyError> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if libm::fabs(a[row][col]) > libm::fabs(a[pivot][col]) {
                pivot = row;
            }
        }
        if libm::fabs(a[pivot][col]) < 1e-300 {
            return Err(SteadyError::SingularJacobian);
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * b[k];
        }
        b[col] = acc / a[col][col];
    }
    Ok(())
}

/// Derived bump quantities: equilibrium residuals `B`, curvatures `D`,
/// radii `lambda` (at unit diffusion), the corresponding intervals, and the
/// prey-side alpha threshold.
#[derive(Clone, Debug)]
pub struct BumpAnalysis {
    pub b: PerSpecies<Vec<f64>>,
    pub d: PerSpecies<Vec<f64>>,
    pub lambda: PerSpecies<Vec<f64>>,
    pub intervals: PerSpecies<Vec<(f64, f64)>>,
    pub alpha_threshold: f64,
}

/// Computes `B`, `D`, `lambda = (3 z / 2 D)^(1/3)` and the unit-diffusion
/// intervals `[cm - lambda, cm + lambda]` for every bump.
pub fn analyze(layout: &BumpLayout, kernels: &KernelTriple, alpha: f64) -> BumpAnalysis {
    let b = compute_b(layout, kernels, alpha);
    let d = compute_d(layout, kernels, alpha);
    let lam = |set: &BumpSet, dv: &[f64]| -> Vec<f64> {
        set.masses
            .iter()
            .zip(dv)
            .map(|(z, dd)| libm::cbrt(1.5 * z / dd))
            .collect()
    };
    let lambda = PerSpecies::new(lam(&layout.rho, &d.rho), lam(&layout.eta, &d.eta));
    let ivals = |set: &BumpSet, lambda: &[f64]| -> Vec<(f64, f64)> {
        set.centers
            .iter()
            .zip(lambda)
            .map(|(c, l)| (c - l, c + l))
            .collect()
    };
    let intervals = PerSpecies::new(ivals(&layout.rho, &lambda.rho), ivals(&layout.eta, &lambda.eta));
    BumpAnalysis {
        alpha_threshold: alpha_threshold(layout, kernels),
        b,
        d,
        lambda,
        intervals,
    }
}

/// Largest escape propensity for which all prey curvatures stay positive:
/// `min_i sum_j S_eta''(..) z_eta^j / sum_j K''(..) z_rho^j` over prey bumps
/// whose cross-curvature sum is negative; `+inf` when unconstrained.
pub fn alpha_threshold(layout: &BumpLayout, kernels: &KernelTriple) -> f64 {
    let mut threshold = f64::INFINITY;
    for (i, ci) in layout.eta.centers.iter().enumerate() {
        let _ = i;
        let mut num = 0.0;
        for (z, cj) in layout.eta.masses.iter().zip(&layout.eta.centers) {
            num += kernels.s_eta.d2_raw(ci - cj) * z;
        }
        let mut den = 0.0;
        for (z, cj) in layout.rho.masses.iter().zip(&layout.rho.centers) {
            den += kernels.k.d2_raw(ci - cj) * z;
        }
        if den < 0.0 {
            threshold = threshold.min(num / den);
        }
    }
    threshold
}

/// Assembled multi-bump state on a grid.
#[derive(Clone, Debug)]
pub struct MultiBumpState {
    pub layout: BumpLayout,
    pub analysis: BumpAnalysis,
    pub pair: SpeciesPair<Density1D>,
}

/// Assembles the Barenblatt profiles for diffusion coefficient `d`: bump `i`
/// has radius `d^(1/3) * lambda_i` and height `D_i lambda_i^2 d^(-1/3) / 2`,
/// so its mass is exactly `z_i`. Requires positive `D`, pairwise-disjoint
/// scaled intervals per species, and a grid containing all bumps.
pub fn build_state(
    layout: &BumpLayout,
    analysis: &BumpAnalysis,
    grid: &Grid1D,
    alpha: f64,
    d: f64,
) -> Result<MultiBumpState, SteadyError> {
    if !(d > 0.0) || !d.is_finite() {
        return Err(SteadyError::Invalid(format!(
            "profile assembly needs a positive diffusion coefficient, got {d}"
        )));
    }
    let delta = libm::cbrt(d);

    let mut densities: Vec<Density1D> = Vec::with_capacity(2);
    for (species, set, dv, lambda) in [
        (Species::Rho, &layout.rho, &analysis.d.rho, &analysis.lambda.rho),
        (Species::Eta, &layout.eta, &analysis.d.eta, &analysis.lambda.eta),
    ] {
        for (index, dd) in dv.iter().enumerate() {
            if !(*dd > 0.0) {
                return Err(SteadyError::NonPositiveD { species, index });
            }
        }
        let radii: Vec<f64> = lambda.iter().map(|l| delta * l).collect();
        for index in 0..set.len().saturating_sub(1) {
            if set.centers[index] + radii[index] >= set.centers[index + 1] - radii[index + 1] {
                return Err(SteadyError::DisjointnessViolated { species, index });
            }
        }
        let mut values = vec![0.0; grid.n_cells];
        for index in 0..set.len() {
            let (cm, r) = (set.centers[index], radii[index]);
            if cm - r < grid.x_min || cm + r > grid.x_max() {
                return Err(SteadyError::BumpOutsideGrid { species, index });
            }
            deposit_parabola(grid, cm, r, dv[index] / (2.0 * d), &mut values);
        }
        densities.push(Density1D::new(*grid, values)?);
    }

    let eta = densities.pop().unwrap();
    let rho = densities.pop().unwrap();
    let pair = SpeciesPair::new(rho, eta, alpha, d)?;

    #[cfg(debug_assertions)]
    for (set, dv, lambda) in [
        (&layout.rho, &analysis.d.rho, &analysis.lambda.rho),
        (&layout.eta, &analysis.d.eta, &analysis.lambda.eta),
    ] {
        for ((z, dd), l) in set.masses.iter().zip(dv.iter()).zip(lambda.iter()) {
            let mass = 2.0 / 3.0 * dd * l * l * l;
            debug_assert!((mass - z).abs() <= 1e-12 * z, "parabola mass identity");
        }
    }

    Ok(MultiBumpState {
        layout: layout.clone(),
        analysis: analysis.clone(),
        pair,
    })
}

/// Adds the cell averages of `h (r^2 - (x-cm)^2)` on `[cm-r, cm+r]` by exact
/// integration of the quadratic.
fn deposit_parabola(grid: &Grid1D, cm: f64, r: f64, h: f64, values: &mut [f64]) {
    let antider = |x: f64| {
        let s = x - cm;
        h * (r * r * s - s * s * s / 3.0)
    };
    let (a, b) = (cm - r, cm + r);
    let n = grid.n_cells;
    let first = (((a - grid.x_min) / grid.dx) as usize).min(n - 1);
    let last = (((b - grid.x_min) / grid.dx) as usize).min(n - 1);
    for (i, value) in values.iter_mut().enumerate().take(last + 1).skip(first) {
        let lo = grid.cell_left(i).max(a);
        let hi = (grid.cell_left(i) + grid.dx).min(b);
        if hi > lo {
            *value += (antider(hi) - antider(lo)) / grid.dx;
        }
    }
}

/// Relative support fraction below which cells do not count as support when
/// measuring stationarity.
const SUPPORT_MASS_FRACTION: f64 = 1e-8;

/// Standard deviation of the Euler-Lagrange expression
/// `d v - S*v - c K*w` over each connected support component, normalised by
/// the mean magnitude; small values mean the state is stationary there.
pub fn stationarity_residual(
    pair: &SpeciesPair<Density1D>,
    kernels: &KernelTriple,
) -> Result<PerSpecies<Vec<f64>>, SteadyError> {
    if pair.eta.grid() != pair.rho.grid() {
        return Err(SteadyError::Density(DensityError::GridMismatch));
    }
    let grid = *pair.rho.grid();
    let n = grid.n_cells;
    let tab_s_rho = crate::density::kernel_table(&kernels.s_rho, grid.dx, n);
    let tab_s_eta = crate::density::kernel_table(&kernels.s_eta, grid.dx, n);
    let tab_k = crate::density::kernel_table(&kernels.k, grid.dx, n);

    let mut out = PerSpecies::new(Vec::new(), Vec::new());
    for species in [Species::Rho, Species::Eta] {
        let (own, other, tab_self) = match species {
            Species::Rho => (&pair.rho, &pair.eta, &tab_s_rho),
            Species::Eta => (&pair.eta, &pair.rho, &tab_s_eta),
        };
        let coef = species.cross_coefficient(pair.alpha);
        let conv_self = crate::density::convolve(tab_self, own.values(), grid.dx);
        let conv_cross = crate::density::convolve(&tab_k, other.values(), grid.dx);
        let el: Vec<f64> = (0..n)
            .map(|i| pair.d * own.values()[i] - conv_self[i] - coef * conv_cross[i])
            .collect();

        let threshold = own.mass() * SUPPORT_MASS_FRACTION / grid.length();
        let mask: Vec<bool> = own.values().iter().map(|v| *v > threshold).collect();
        let comps = components(&mask);
        if comps.is_empty() {
            return Err(SteadyError::EmptySupport { species });
        }
        let mut residuals = Vec::with_capacity(comps.len());
        for (start, end) in comps {
            let cells = &el[start..=end];
            let len = cells.len() as f64;
            let mean: f64 = cells.iter().sum::<f64>() / len;
            let var: f64 = cells.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
            let std = libm::sqrt(var);
            residuals.push(std / libm::fabs(mean).max(1e-30));
        }
        match species {
            Species::Rho => out.rho = residuals,
            Species::Eta => out.eta = residuals,
        }
    }
    Ok(out)
}

fn components(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut comps = Vec::new();
    let mut start = None;
    for (i, &m) in mask.iter().enumerate() {
        match (m, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                comps.push((s, i - 1));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        comps.push((s, mask.len() - 1));
    }
    comps
}

/// Qualitative regime of a steady pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Classification {
    /// One component each, predators nested inside prey.
    Mixed,
    /// One predator component, two prey components flanking it.
    Separated,
    /// Any other clean multi-component arrangement.
    MultiBump { n_rho: usize, n_eta: usize },
    /// Supports overlap partially (or a species is empty).
    Indeterminate,
}

/// Default relative support threshold for [`classify`].
pub const SUPPORT_TOL_DEFAULT: f64 = 1e-6;

/// Extracts support components at `support_tol * max(value)` per species and
/// matches them against the mixed / separated / multi-bump patterns.
pub fn classify(rho: &Density1D, eta: &Density1D, support_tol: f64) -> Classification {
    let comp_of = |d: &Density1D| -> Vec<(usize, usize)> {
        let max = d.values().iter().cloned().fold(0.0f64, f64::max);
        if max <= 0.0 {
            return Vec::new();
        }
        let mask: Vec<bool> = d.values().iter().map(|v| *v > support_tol * max).collect();
        components(&mask)
    };
    let cr = comp_of(rho);
    let ce = comp_of(eta);
    if cr.is_empty() || ce.is_empty() {
        return Classification::Indeterminate;
    }

    let contains = |outer: (usize, usize), inner: (usize, usize)| {
        outer.0 <= inner.0 && inner.1 <= outer.1
    };
    let disjoint = |a: (usize, usize), b: (usize, usize)| a.1 < b.0 || b.1 < a.0;

    if cr.len() == 1 && ce.len() == 1 && contains(ce[0], cr[0]) {
        return Classification::Mixed;
    }
    if cr.len() == 1 && ce.len() == 2 && disjoint(ce[0], cr[0]) && disjoint(ce[1], cr[0]) {
        return Classification::Separated;
    }
    for &a in &cr {
        for &b in &ce {
            if !disjoint(a, b) && !contains(a, b) && !contains(b, a) {
                return Classification::Indeterminate;
            }
        }
    }
    Classification::MultiBump {
        n_rho: cr.len(),
        n_eta: ce.len(),
    }
}
