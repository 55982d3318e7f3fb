//! State representations and transport diagnostics.
//!
//! Two equivalent views of a one-dimensional density are used throughout:
//! cell averages on a uniform grid ([`Density1D`]) and the quantile function
//! sampled at equal-mass fractions ([`PseudoInverse`]). Conversions go
//! through the piecewise-linear CDF; particle-to-grid reconstruction places
//! `mass/(N-1)` on each inter-particle interval and deposits it by exact
//! overlap integration, so mass is preserved to rounding.
//!
//! Wasserstein distances are computed in quantile space (the natural 1D
//! representation), and the relative energy functional matches the one that
//! decreases along the semi-implicit minimising-movement steps: the moving
//! pair couples to the frozen reference of the *other* species through the
//! cross kernel.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::kernels::KernelTriple;

#[derive(Clone, Debug, PartialEq)]
pub enum DensityError {
    Invalid(String),
    ZeroMass,
    MassMismatch { left: f64, right: f64 },
    GridMismatch,
    CoincidentParticles { index: usize },
    ParticleOutsideGrid { index: usize, position: f64 },
}

impl core::fmt::Display for DensityError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            DensityError::Invalid(msg) => write!(f, "invalid density data: {msg}"),
            DensityError::ZeroMass => write!(f, "operation requires positive mass"),
            DensityError::MassMismatch { left, right } => {
                write!(f, "mass mismatch: {left} vs {right}")
            }
            DensityError::GridMismatch => write!(f, "densities live on different grids"),
            DensityError::CoincidentParticles { index } => {
                write!(f, "coincident particles at index {index}")
            }
            DensityError::ParticleOutsideGrid { index, position } => {
                write!(f, "particle {index} at {position} escapes the grid")
            }
        }
    }
}

impl core::error::Error for DensityError {}

/// Uniform cell grid: cell `i` spans `[x_min + i dx, x_min + (i+1) dx)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid1D {
    pub x_min: f64,
    pub dx: f64,
    pub n_cells: usize,
}

impl Grid1D {
    pub fn new(x_min: f64, dx: f64, n_cells: usize) -> Result<Self, DensityError> {
        if !x_min.is_finite() || !dx.is_finite() || dx <= 0.0 {
            return Err(DensityError::Invalid(format!(
                "grid needs finite x_min and positive dx, got ({x_min}, {dx})"
            )));
        }
        if n_cells < 2 {
            return Err(DensityError::Invalid(format!(
                "grid needs at least 2 cells, got {n_cells}"
            )));
        }
        Ok(Self { x_min, dx, n_cells })
    }

    /// Grid with exactly `n_cells` cells covering `[x_min, x_max]`.
    pub fn covering(x_min: f64, x_max: f64, n_cells: usize) -> Result<Self, DensityError> {
        if !(x_max > x_min) {
            return Err(DensityError::Invalid(format!(
                "empty domain [{x_min}, {x_max}]"
            )));
        }
        Self::new(x_min, (x_max - x_min) / n_cells as f64, n_cells)
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.dx * self.n_cells as f64
    }

    pub fn length(&self) -> f64 {
        self.dx * self.n_cells as f64
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx
    }

    pub fn cell_left(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }
}

/// Non-negative cell averages on a [`Grid1D`].
#[derive(Clone, Debug, PartialEq)]
pub struct Density1D {
    grid: Grid1D,
    values: Vec<f64>,
}

impl Density1D {
    pub fn new(grid: Grid1D, values: Vec<f64>) -> Result<Self, DensityError> {
        if values.len() != grid.n_cells {
            return Err(DensityError::Invalid(format!(
                "expected {} cell values, got {}",
                grid.n_cells,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DensityError::Invalid(
                "cell averages must be finite and non-negative".into(),
            ));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid1D) -> Self {
        Self {
            values: vec![0.0; grid.n_cells],
            grid,
        }
    }

    /// Cell averages of a piecewise-constant profile given as segments
    /// `(a, b, height)`; overlapping segments add.
    pub fn from_segments(grid: Grid1D, segments: &[(f64, f64, f64)]) -> Result<Self, DensityError> {
        let mut values = vec![0.0; grid.n_cells];
        for &(a, b, height) in segments {
            if !(b > a) || height < 0.0 || !height.is_finite() {
                return Err(DensityError::Invalid(format!(
                    "bad segment ({a}, {b}, {height})"
                )));
            }
            if a < grid.x_min - 1e-12 || b > grid.x_max() + 1e-12 {
                return Err(DensityError::Invalid(format!(
                    "segment [{a}, {b}] outside domain [{}, {}]",
                    grid.x_min,
                    grid.x_max()
                )));
            }
            deposit_uniform(&grid, a, b, height, &mut values);
        }
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mass(&self) -> f64 {
        let sum: f64 = self.values.iter().sum();
        sum * self.grid.dx
    }

    /// Mass-weighted mean position.
    pub fn center_of_mass(&self) -> Result<f64, DensityError> {
        let mass = self.mass();
        if mass <= 0.0 {
            return Err(DensityError::ZeroMass);
        }
        let mut first = 0.0;
        for (i, v) in self.values.iter().enumerate() {
            first += self.grid.cell_center(i) * v;
        }
        Ok(first * self.grid.dx / mass)
    }

    /// Reflection about the grid midpoint (cell order reversed).
    pub fn reflected(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        Self {
            grid: self.grid,
            values,
        }
    }

    /// `sum |self - other| dx`; grids must match.
    pub fn l1_distance(&self, other: &Self) -> Result<f64, DensityError> {
        if self.grid != other.grid {
            return Err(DensityError::GridMismatch);
        }
        let mut acc = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            acc += libm::fabs(a - b);
        }
        Ok(acc * self.grid.dx)
    }

    /// Monotone piecewise-linear CDF table.
    pub fn cdf(&self) -> Result<CdfTable, DensityError> {
        let n = self.grid.n_cells;
        let mut cum = Vec::with_capacity(n + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for v in &self.values {
            acc += v * self.grid.dx;
            cum.push(acc);
        }
        if acc <= 0.0 {
            return Err(DensityError::ZeroMass);
        }
        Ok(CdfTable {
            grid: self.grid,
            cum,
        })
    }
}

/// Cumulative distribution of a [`Density1D`]: `cum[i]` is the mass strictly
/// left of cell edge `i`.
#[derive(Clone, Debug)]
pub struct CdfTable {
    grid: Grid1D,
    cum: Vec<f64>,
}

impl CdfTable {
    pub fn mass(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    /// F(x), clamped to `[0, mass]` outside the grid.
    pub fn eval(&self, x: f64) -> f64 {
        if x <= self.grid.x_min {
            return 0.0;
        }
        if x >= self.grid.x_max() {
            return self.mass();
        }
        let s = (x - self.grid.x_min) / self.grid.dx;
        let i = (s as usize).min(self.grid.n_cells - 1);
        let frac = s - i as f64;
        self.cum[i] + (self.cum[i + 1] - self.cum[i]) * frac
    }

    /// Pseudo-inverse `u(z) = inf { x : F(x) > z }` for `0 <= z < mass`; at
    /// `z = mass` the right end of the support is returned.
    pub fn quantile(&self, z: f64) -> f64 {
        let n = self.grid.n_cells;
        let mass = self.mass();
        if z <= 0.0 {
            // First cell carrying mass.
            let i = self.cum.iter().position(|&c| c > 0.0).unwrap() - 1;
            return self.grid.cell_left(i);
        }
        if z >= mass {
            // Right edge of the last cell carrying mass.
            let i = (0..n).rev().find(|&i| self.cum[i + 1] > self.cum[i]).unwrap();
            return self.grid.cell_left(i + 1);
        }
        // First edge with cum > z; the cell left of it has positive mass.
        let idx = self.cum.partition_point(|&c| c <= z);
        let i = idx - 1;
        let cell_mass = self.cum[i + 1] - self.cum[i];
        self.grid.cell_left(i) + (z - self.cum[i]) / cell_mass * self.grid.dx
    }
}

/// Quantile samples of a density: `positions[k] = u(k * mass / (N-1))`.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoInverse {
    positions: Vec<f64>,
    mass: f64,
}

impl PseudoInverse {
    pub fn new(positions: Vec<f64>, mass: f64) -> Result<Self, DensityError> {
        if positions.len() < 2 {
            return Err(DensityError::Invalid(format!(
                "need at least 2 particles, got {}",
                positions.len()
            )));
        }
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(DensityError::Invalid(format!("mass must be positive, got {mass}")));
        }
        if positions.iter().any(|p| !p.is_finite()) {
            return Err(DensityError::Invalid("non-finite particle position".into()));
        }
        for (i, w) in positions.windows(2).enumerate() {
            if w[1] < w[0] {
                return Err(DensityError::Invalid(format!(
                    "positions must be non-decreasing (index {i})"
                )));
            }
        }
        Ok(Self { positions, mass })
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Mass carried by each inter-particle interval.
    pub fn interval_mass(&self) -> f64 {
        self.mass / (self.positions.len() - 1) as f64
    }

    /// Plain mean of the particle positions.
    pub fn mean_position(&self) -> f64 {
        let sum: f64 = self.positions.iter().sum();
        sum / self.positions.len() as f64
    }

    pub fn reflected(&self) -> Self {
        let mut positions: Vec<f64> = self.positions.iter().map(|p| -p).collect();
        positions.reverse();
        Self {
            positions,
            mass: self.mass,
        }
    }

    pub(crate) fn positions_mut(&mut self) -> &mut [f64] {
        &mut self.positions
    }
}

/// Equal-mass quantile particles of a density: `F(X_k) = k * mass / (N-1)`,
/// ties resolved to the leftmost point.
pub fn pseudo_inverse(density: &Density1D, n_particles: usize) -> Result<PseudoInverse, DensityError> {
    if n_particles < 2 {
        return Err(DensityError::Invalid(format!(
            "need at least 2 particles, got {n_particles}"
        )));
    }
    let cdf = density.cdf()?;
    let mass = cdf.mass();
    let step = mass / (n_particles - 1) as f64;
    let mut positions = Vec::with_capacity(n_particles);
    for k in 0..n_particles {
        let z = if k == n_particles - 1 { mass } else { k as f64 * step };
        positions.push(cdf.quantile(z));
    }
    PseudoInverse::new(positions, mass)
}

/// Like [`pseudo_inverse`], but a quantile that falls on an interior vacuum
/// gap (to rounding accuracy) is placed at the midpoint of the gap instead
/// of its left end. Inter-particle masses are unchanged — the gap carries no
/// mass — but mirror-symmetric densities now yield mirror-symmetric particle
/// ensembles, which the one-sided tie convention cannot provide when a
/// quantile target lands exactly on a gap. Used to initialize the particle
/// method.
pub fn pseudo_inverse_centered(
    density: &Density1D,
    n_particles: usize,
) -> Result<PseudoInverse, DensityError> {
    let base = pseudo_inverse(density, n_particles)?;
    let mass = base.mass();
    let cdf = density.cdf()?;
    let grid = density.grid();
    let values = density.values();
    let n = grid.n_cells;
    let tol = 1e-12 * mass;
    let step = mass / (n_particles - 1) as f64;

    let mut positions = base.positions().to_vec();
    for (k, pos) in positions.iter_mut().enumerate().skip(1).take(n_particles - 2) {
        let z = k as f64 * step;
        // Cell the quantile landed in.
        let idx = cdf.cum.partition_point(|&c| c <= z).saturating_sub(1).min(n - 1);
        if z - cdf.cum[idx] <= tol && idx > 0 && values[idx - 1] == 0.0 {
            // Just past a vacuum run on the left.
            let mut l = idx - 1;
            while l > 0 && values[l - 1] == 0.0 {
                l -= 1;
            }
            if l > 0 {
                *pos = 0.5 * (grid.cell_left(l) + grid.cell_left(idx));
            }
        } else if cdf.cum[idx + 1] - z <= tol && idx + 1 < n && values[idx + 1] == 0.0 {
            // Just before a vacuum run on the right.
            let mut r = idx + 1;
            while r + 1 < n && values[r + 1] == 0.0 {
                r += 1;
            }
            if r + 1 < n {
                *pos = 0.5 * (grid.cell_left(idx + 1) + grid.cell_left(r + 1));
            }
        }
    }
    PseudoInverse::new(positions, mass)
}

/// Piecewise-constant reconstruction: density `m / (X_{k+1} - X_k)` on each
/// interval (`m` the interval mass), deposited on the grid by exact overlap
/// integration. Boundary values outside `[X_0, X_{N-1}]` are zero.
pub fn density_from_particles(u: &PseudoInverse, grid: &Grid1D) -> Result<Density1D, DensityError> {
    let pos = u.positions();
    for (i, w) in pos.windows(2).enumerate() {
        if w[1] <= w[0] {
            return Err(DensityError::CoincidentParticles { index: i });
        }
    }
    for (i, &p) in pos.iter().enumerate() {
        if p < grid.x_min || p > grid.x_max() {
            return Err(DensityError::ParticleOutsideGrid { index: i, position: p });
        }
    }
    let m = u.interval_mass();
    let mut values = vec![0.0; grid.n_cells];
    for w in pos.windows(2) {
        deposit_uniform(grid, w[0], w[1], m / (w[1] - w[0]), &mut values);
    }
    // Tiny negative round-off cannot occur (all contributions are >= 0).
    Density1D::new(*grid, values)
}

fn deposit_uniform(grid: &Grid1D, a: f64, b: f64, height: f64, values: &mut [f64]) {
    let n = grid.n_cells;
    let first = (((a - grid.x_min) / grid.dx) as usize).min(n - 1);
    let last = (((b - grid.x_min) / grid.dx) as usize).min(n - 1);
    for (i, value) in values.iter_mut().enumerate().take(last + 1).skip(first) {
        let lo = grid.cell_left(i).max(a);
        let hi = (grid.cell_left(i) + grid.dx).min(b);
        if hi > lo {
            *value += (hi - lo) * height / grid.dx;
        }
    }
}

/// A predator/prey pair of states together with the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct SpeciesPair<T> {
    pub rho: T,
    pub eta: T,
    pub alpha: f64,
    pub d: f64,
}

impl<T> SpeciesPair<T> {
    pub fn new(rho: T, eta: T, alpha: f64, d: f64) -> Result<Self, DensityError> {
        if !alpha.is_finite() || alpha <= 0.0 {
            return Err(DensityError::Invalid(format!("alpha must be positive, got {alpha}")));
        }
        if !d.is_finite() || d < 0.0 {
            return Err(DensityError::Invalid(format!(
                "diffusion coefficient must be non-negative, got {d}"
            )));
        }
        Ok(Self { rho, eta, alpha, d })
    }
}

/// Conserved joint centre of mass `alpha * cm_rho - cm_eta` (mass-weighted
/// means).
pub fn joint_center(pair: &SpeciesPair<Density1D>) -> Result<f64, DensityError> {
    Ok(pair.alpha * pair.rho.center_of_mass()? - pair.eta.center_of_mass()?)
}

/// Number of quantile nodes used by the Wasserstein quadrature.
pub const WASSERSTEIN_NODES: usize = 2048;

/// `W_p` between equal-mass densities, computed as the `L^p` distance of the
/// quantile functions by a midpoint rule in mass space (masses are normalised
/// to one internally; they must agree to 1e-9 relative).
pub fn wasserstein(p: &Density1D, q: &Density1D, order: f64) -> Result<f64, DensityError> {
    if !(order >= 1.0) {
        return Err(DensityError::Invalid(format!("order must be >= 1, got {order}")));
    }
    let cdf_p = p.cdf()?;
    let cdf_q = q.cdf()?;
    let (mp, mq) = (cdf_p.mass(), cdf_q.mass());
    if libm::fabs(mp - mq) > 1e-9 * mp.max(mq) {
        return Err(DensityError::MassMismatch { left: mp, right: mq });
    }
    let n = WASSERSTEIN_NODES;
    let mut acc = 0.0;
    for k in 0..n {
        let z = (k as f64 + 0.5) / n as f64;
        let diff = libm::fabs(cdf_p.quantile(z * mp) - cdf_q.quantile(z * mq));
        acc += if order == 1.0 {
            diff
        } else if order == 2.0 {
            diff * diff
        } else {
            libm::pow(diff, order)
        };
    }
    acc /= n as f64;
    Ok(if order == 1.0 {
        acc
    } else if order == 2.0 {
        libm::sqrt(acc)
    } else {
        libm::pow(acc, 1.0 / order)
    })
}

/// Exact 1-Wasserstein distance between equal-mass densities on the same
/// grid, computed as the area between their CDFs (both piecewise linear on
/// the shared cells, so each cell integrates in closed form). Unlike the
/// quantile-space quadrature of [`wasserstein`], this is insensitive to
/// quantile jumps across vacuum gaps, which makes it the right movement
/// measure for steadiness detection of cell-averaged states.
pub fn wasserstein1_exact(p: &Density1D, q: &Density1D) -> Result<f64, DensityError> {
    if p.grid != q.grid {
        return Err(DensityError::GridMismatch);
    }
    let (mp, mq) = (p.mass(), q.mass());
    if libm::fabs(mp - mq) > 1e-9 * mp.max(mq) {
        return Err(DensityError::MassMismatch { left: mp, right: mq });
    }
    let dx = p.grid.dx;
    let mut acc = 0.0;
    let mut d0 = 0.0;
    for (vp, vq) in p.values.iter().zip(&q.values) {
        let d1 = d0 + (vp - vq) * dx;
        acc += if d0 * d1 >= 0.0 {
            0.5 * dx * (libm::fabs(d0) + libm::fabs(d1))
        } else {
            0.5 * dx * (d0 * d0 + d1 * d1) / libm::fabs(d1 - d0)
        };
        d0 = d1;
    }
    Ok(acc)
}

/// Product transport metric: `sqrt(W_2(rho_a, rho_b)^2 + W_2(eta_a, eta_b)^2)`.
pub fn product_w2(
    a: &SpeciesPair<Density1D>,
    b: &SpeciesPair<Density1D>,
) -> Result<f64, DensityError> {
    let wr = wasserstein(&a.rho, &b.rho, 2.0)?;
    let we = wasserstein(&a.eta, &b.eta, 2.0)?;
    Ok(libm::sqrt(wr * wr + we * we))
}

/// Relative energy functional with reference pair `(mu, nu)`:
///
/// ```text
/// F = d/2 sum (rho^2 + eta^2) dx - 1/2 sum rho (S_rho*rho) dx
///     - 1/2 sum eta (S_eta*eta) dx - sum rho (K*mu) dx + alpha sum eta (K*nu) dx
/// ```
///
/// where `mu` is the frozen prey reference and `nu` the frozen predator
/// reference, so that with the reference re-frozen at the current state the
/// value does not increase along the evolution.
pub fn energy(
    pair: &SpeciesPair<Density1D>,
    reference: &SpeciesPair<Density1D>,
    kernels: &KernelTriple,
) -> Result<f64, DensityError> {
    let grid = pair.rho.grid();
    for other in [pair.eta.grid(), reference.rho.grid(), reference.eta.grid()] {
        if other != grid {
            return Err(DensityError::GridMismatch);
        }
    }
    let dx = grid.dx;
    let n = grid.n_cells;

    let rho = pair.rho.values();
    let eta = pair.eta.values();
    let mu = reference.eta.values();
    let nu = reference.rho.values();

    let tab_s_rho = kernel_table(&kernels.s_rho, dx, n);
    let tab_s_eta = kernel_table(&kernels.s_eta, dx, n);
    let tab_k = kernel_table(&kernels.k, dx, n);

    let conv_s_rho = convolve(&tab_s_rho, rho, dx);
    let conv_s_eta = convolve(&tab_s_eta, eta, dx);
    let conv_k_mu = convolve(&tab_k, mu, dx);
    let conv_k_nu = convolve(&tab_k, nu, dx);

    let mut quad = 0.0;
    let mut self_rho = 0.0;
    let mut self_eta = 0.0;
    let mut cross_rho = 0.0;
    let mut cross_eta = 0.0;
    for i in 0..n {
        quad += rho[i] * rho[i] + eta[i] * eta[i];
        self_rho += rho[i] * conv_s_rho[i];
        self_eta += eta[i] * conv_s_eta[i];
        cross_rho += rho[i] * conv_k_mu[i];
        cross_eta += eta[i] * conv_k_nu[i];
    }
    Ok(dx
        * (0.5 * pair.d * quad - 0.5 * self_rho - 0.5 * self_eta - cross_rho
            + pair.alpha * cross_eta))
}

/// Kernel values at cell-centre offsets `k * dx`, `k = 0..n-1`.
pub(crate) fn kernel_table(kernel: &crate::kernels::Kernel, dx: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| kernel.eval_raw(k as f64 * dx)).collect()
}

/// Discrete convolution `(G*f)(x_i) = sum_j G((i-j) dx) f_j dx` using the
/// symmetric offset table; left-to-right accumulation for determinism.
pub(crate) fn convolve(table: &[f64], f: &[f64], dx: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, fj) in f.iter().enumerate() {
            let k = i.abs_diff(j);
            acc += table[k] * fj;
        }
        *o = acc * dx;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::Kernel;

    fn uniform(x_min: f64, x_max: f64, n: usize, height: f64) -> Density1D {
        let grid = Grid1D::covering(x_min, x_max, n).unwrap();
        Density1D::new(grid, vec![height; n]).unwrap()
    }

    /// Small deterministic generator for property-style tests.
    struct SplitMix(u64);
    impl SplitMix {
        fn next_f64(&mut self) -> f64 {
            self.0 = self.0.wrapping_add(0x9e3779b97f4a7c15);
            let mut z = self.0;
            z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
            z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
            ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64
        }
    }

    fn random_density(rng: &mut SplitMix, grid: Grid1D) -> Density1D {
        let values: Vec<f64> = (0..grid.n_cells).map(|_| rng.next_f64()).collect();
        Density1D::new(grid, values).unwrap()
    }

    #[test]
    fn cdf_of_uniform_density() {
        let d = uniform(-1.0, 1.0, 40, 0.5);
        let cdf = d.cdf().unwrap();
        assert!((cdf.eval(0.0) - 0.5).abs() < 1e-14);
        assert_eq!(cdf.eval(-1.0), 0.0);
        assert!((cdf.eval(1.0) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn cdf_of_single_loaded_cell() {
        let grid = Grid1D::new(0.0, 1.0, 2).unwrap();
        let d = Density1D::new(grid, vec![1.0, 0.0]).unwrap();
        let cdf = d.cdf().unwrap();
        assert!((cdf.eval(0.5) - 0.5).abs() < 1e-15);
        assert!((cdf.eval(2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn cdf_rejects_zero_mass() {
        let d = Density1D::zeros(Grid1D::new(0.0, 1.0, 4).unwrap());
        assert_eq!(d.cdf().unwrap_err(), DensityError::ZeroMass);
    }

    #[test]
    fn pseudo_inverse_uniform_quantiles() {
        let d = uniform(0.0, 1.0, 50, 1.0);
        let u = pseudo_inverse(&d, 3).unwrap();
        for (got, want) in u.positions().iter().zip([0.0, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }

        let d = uniform(-1.0, 1.0, 100, 0.5);
        let u = pseudo_inverse(&d, 5).unwrap();
        for (got, want) in u.positions().iter().zip([-1.0, -0.5, 0.0, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pseudo_inverse_skips_interior_gap() {
        // Mass 0.5 on [0,1), gap on [1,2), mass 0.5 on [2,3).
        let grid = Grid1D::new(0.0, 1.0, 3).unwrap();
        let d = Density1D::new(grid, vec![0.5, 0.0, 0.5]).unwrap();
        let u = pseudo_inverse(&d, 5).unwrap();

        // Brute-force oracle: scan a refined CDF for the first x with F(x) > z.
        let fine = 200_001;
        let cdf = d.cdf().unwrap();
        let mass = cdf.mass();
        for (k, &got) in u.positions().iter().enumerate() {
            let z = k as f64 * mass / 4.0;
            let mut oracle = 3.0;
            if k == 4 {
                oracle = 3.0; // right support edge
            } else {
                for s in 0..fine {
                    let x = 3.0 * s as f64 / (fine - 1) as f64;
                    if cdf.eval(x) > z {
                        oracle = x;
                        break;
                    }
                }
            }
            assert!(
                (got - oracle).abs() < 3.0 / (fine - 1) as f64 * 2.0,
                "quantile {k}: {got} vs oracle {oracle}"
            );
        }
        // The mid quantile z = 0.25 lands at the right edge of the gap.
        assert!((u.positions()[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn centered_pseudo_inverse_resolves_gap_ties_symmetrically() {
        // Two equal bumps: the median quantile is a vacuum tie. The plain
        // inf convention puts it on the right bump's edge; the centered
        // variant puts it mid-gap, so the ensemble mirrors.
        let grid = Grid1D::covering(-4.0, 4.0, 64).unwrap();
        let d = Density1D::from_segments(grid, &[(-3.5, -1.5, 0.25), (1.5, 3.5, 0.25)]).unwrap();

        let plain = pseudo_inverse(&d, 9).unwrap();
        assert!(plain.positions()[4] >= 1.5 - 1e-12, "inf convention lands right");

        let centered = pseudo_inverse_centered(&d, 9).unwrap();
        assert!(centered.positions()[4].abs() < 1e-12, "tie at the gap midpoint");
        let pos = centered.positions();
        for k in 0..pos.len() {
            assert!(
                (pos[k] + pos[pos.len() - 1 - k]).abs() < 1e-12,
                "mirror symmetry at {k}: {} vs {}",
                pos[k],
                pos[pos.len() - 1 - k]
            );
        }
        // Off-tie quantiles are untouched.
        for k in [1, 2, 3, 5, 6, 7] {
            assert_eq!(pos[k], plain.positions()[k]);
        }
        assert_eq!(pos[0], plain.positions()[0]);
    }

    #[test]
    fn reconstruction_matches_hand_values() {
        let grid = Grid1D::covering(-0.5, 3.5, 400).unwrap();
        let u = PseudoInverse::new(vec![0.0, 1.0, 3.0], 1.0).unwrap();
        let d = density_from_particles(&u, &grid).unwrap();
        // 0.5 on (0,1), 0.25 on (1,3).
        let at = |x: f64| {
            let i = ((x - grid.x_min) / grid.dx) as usize;
            d.values()[i]
        };
        assert!((at(0.5) - 0.5).abs() < 1e-12);
        assert!((at(2.0) - 0.25).abs() < 1e-12);
        assert!((d.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn reconstruction_of_uniform_particles_is_uniform() {
        let grid = Grid1D::covering(-0.25, 1.25, 300).unwrap();
        let u = PseudoInverse::new(vec![0.0, 0.5, 1.0], 1.0).unwrap();
        let d = density_from_particles(&u, &grid).unwrap();
        for i in 0..grid.n_cells {
            let x = grid.cell_center(i);
            if x > 0.01 && x < 0.99 {
                assert!((d.values()[i] - 1.0).abs() < 1e-12, "at {x}");
            }
        }
    }

    #[test]
    fn round_trip_uniform_within_cell_width() {
        let d = uniform(0.0, 1.0, 64, 1.0);
        let u = pseudo_inverse(&d, 33).unwrap();
        let back = density_from_particles(&u, d.grid()).unwrap();
        assert!(wasserstein(&d, &back, 1.0).unwrap() <= d.grid().dx);
    }

    #[test]
    fn reconstruction_errors() {
        let grid = Grid1D::covering(0.0, 1.0, 10).unwrap();
        let u = PseudoInverse::new(vec![0.2, 0.2, 0.8], 1.0).unwrap();
        assert_eq!(
            density_from_particles(&u, &grid).unwrap_err(),
            DensityError::CoincidentParticles { index: 0 }
        );
        let u = PseudoInverse::new(vec![0.2, 0.5, 1.5], 1.0).unwrap();
        assert_eq!(
            density_from_particles(&u, &grid).unwrap_err(),
            DensityError::ParticleOutsideGrid { index: 2, position: 1.5 }
        );
    }

    #[test]
    fn mass_conservation_of_deposit_is_tight() {
        let mut rng = SplitMix(7);
        let grid = Grid1D::covering(-5.0, 5.0, 173).unwrap();
        for _ in 0..50 {
            let mut pos: Vec<f64> = (0..24).map(|_| 9.0 * rng.next_f64() - 4.5).collect();
            pos.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
            pos.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
            if pos.len() < 2 {
                continue;
            }
            let mass = 0.1 + 3.0 * rng.next_f64();
            let u = PseudoInverse::new(pos, mass).unwrap();
            let d = density_from_particles(&u, &grid).unwrap();
            assert!((d.mass() - mass).abs() <= 1e-12 * mass);
        }
    }

    #[test]
    fn pseudo_inverse_output_is_always_sorted() {
        let mut rng = SplitMix(99);
        let grid = Grid1D::covering(-2.0, 2.0, 57).unwrap();
        for _ in 0..40 {
            let d = random_density(&mut rng, grid);
            let u = pseudo_inverse(&d, 23).unwrap();
            for w in u.positions().windows(2) {
                assert!(w[1] >= w[0]);
            }
        }
    }

    #[test]
    fn centers_of_mass_and_joint_center() {
        let sym = uniform(-1.0, 1.0, 64, 0.5);
        assert!(sym.center_of_mass().unwrap().abs() < 1e-14);

        let grid = Grid1D::covering(-3.0, 3.0, 600).unwrap();
        let rho = Density1D::from_segments(grid, &[(0.0, 2.0, 0.5)]).unwrap();
        let eta = Density1D::from_segments(grid, &[(-2.0, 0.0, 0.5)]).unwrap();
        let pair = SpeciesPair::new(rho, eta, 2.0, 0.0).unwrap();
        assert!((joint_center(&pair).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn wasserstein_identity_and_translation() {
        let p = uniform(0.0, 1.0, 128, 1.0);
        assert_eq!(wasserstein(&p, &p, 2.0).unwrap(), 0.0);

        for order in [1.0, 2.0, 3.0] {
            let a = 0.375;
            let grid = Grid1D::covering(-1.0, 3.0, 512).unwrap();
            let p = Density1D::from_segments(grid, &[(0.0, 1.0, 1.0)]).unwrap();
            let q = Density1D::from_segments(grid, &[(a, 1.0 + a, 1.0)]).unwrap();
            let w = wasserstein(&p, &q, order).unwrap();
            assert!((w - a).abs() < 1e-6, "order {order}: {w} vs {a}");
        }
    }

    #[test]
    fn wasserstein_dilation_matches_oracle() {
        // Cell edges aligned with the segment ends, so the 64-cell histograms
        // represent the two boxes exactly.
        let grid = Grid1D::covering(0.0, 2.0, 64).unwrap();
        let p = Density1D::from_segments(grid, &[(0.0, 1.0, 1.0)]).unwrap();
        let q = Density1D::from_segments(grid, &[(0.0, 2.0, 0.5)]).unwrap();
        let w = wasserstein(&p, &q, 1.0).unwrap();
        assert!((w - 0.5).abs() < 1e-6, "{w}");

        // Independent discrete-transport oracle on the 64-cell histograms:
        // optimal 1D transport cost equals the integral of |F_p - F_q|.
        let (cp, cq) = (p.cdf().unwrap(), q.cdf().unwrap());
        let mut oracle = 0.0;
        let fine = 20_000;
        for s in 0..fine {
            let x = grid.x_min + grid.length() * (s as f64 + 0.5) / fine as f64;
            oracle += (cp.eval(x) - cq.eval(x)).abs();
        }
        oracle *= grid.length() / fine as f64;
        assert!((w - oracle).abs() < 1e-4, "{w} vs oracle {oracle}");
    }

    #[test]
    fn exact_w1_matches_quantile_quadrature_and_ignores_gap_noise() {
        let grid = Grid1D::covering(-1.0, 3.0, 512).unwrap();
        let p = Density1D::from_segments(grid, &[(0.0, 1.0, 1.0)]).unwrap();
        let q = Density1D::from_segments(grid, &[(0.375, 1.375, 1.0)]).unwrap();
        let exact = wasserstein1_exact(&p, &q).unwrap();
        let quad = wasserstein(&p, &q, 1.0).unwrap();
        assert!((exact - 0.375).abs() < 1e-12, "{exact}");
        assert!((exact - quad).abs() < 1e-6);
        assert_eq!(wasserstein1_exact(&p, &p).unwrap(), 0.0);

        // Two far bumps with a 1e-12 mass imbalance: the median quantile
        // jumps across the whole gap, the exact transport distance does not.
        let a = Density1D::from_segments(
            grid,
            &[(-1.0, 0.0, 0.5 + 1e-12), (2.0, 3.0, 0.5 - 1e-12)],
        )
        .unwrap();
        let b = Density1D::from_segments(
            grid,
            &[(-1.0, 0.0, 0.5 - 1e-12), (2.0, 3.0, 0.5 + 1e-12)],
        )
        .unwrap();
        let w = wasserstein1_exact(&a, &b).unwrap();
        assert!(w < 1e-10, "gap noise must stay small, got {w}");
    }

    #[test]
    fn wasserstein_rejects_mass_mismatch() {
        let p = uniform(0.0, 1.0, 32, 1.0);
        let q = uniform(0.0, 1.0, 32, 2.0);
        assert!(matches!(
            wasserstein(&p, &q, 2.0),
            Err(DensityError::MassMismatch { .. })
        ));
    }

    #[test]
    fn wasserstein_metric_axioms_on_random_triples() {
        let mut rng = SplitMix(2024);
        let grid = Grid1D::covering(-2.0, 2.0, 96).unwrap();
        for _ in 0..12 {
            let mut triple: Vec<Density1D> = Vec::new();
            for _ in 0..3 {
                let mut d = random_density(&mut rng, grid);
                let m = d.mass();
                let values: Vec<f64> = d.values().iter().map(|v| v / m).collect();
                d = Density1D::new(grid, values).unwrap();
                triple.push(d);
            }
            let w = |a: &Density1D, b: &Density1D| wasserstein(a, b, 2.0).unwrap();
            let (ab, ba) = (w(&triple[0], &triple[1]), w(&triple[1], &triple[0]));
            assert!((ab - ba).abs() <= 1e-12);
            let (bc, ac) = (w(&triple[1], &triple[2]), w(&triple[0], &triple[2]));
            assert!(ac <= ab + bc + 1e-6, "triangle: {ac} > {ab} + {bc}");
            assert_eq!(w(&triple[0], &triple[0]), 0.0);
        }
    }

    #[test]
    fn product_metric_cases() {
        let grid = Grid1D::covering(-1.0, 6.0, 700).unwrap();
        let base = Density1D::from_segments(grid, &[(0.0, 1.0, 1.0)]).unwrap();
        let shift3 = Density1D::from_segments(grid, &[(3.0, 4.0, 1.0)]).unwrap();
        let shift4 = Density1D::from_segments(grid, &[(4.0, 5.0, 1.0)]).unwrap();

        let a = SpeciesPair::new(base.clone(), base.clone(), 1.0, 0.0).unwrap();
        assert_eq!(product_w2(&a, &a).unwrap(), 0.0);

        let b = SpeciesPair::new(shift3.clone(), base.clone(), 1.0, 0.0).unwrap();
        assert!((product_w2(&a, &b).unwrap() - 3.0).abs() < 1e-6);

        let c = SpeciesPair::new(shift3, shift4, 1.0, 0.0).unwrap();
        assert!((product_w2(&a, &c).unwrap() - 5.0).abs() < 1e-6);
    }

    #[test]
    fn energy_quadratic_term_only() {
        let grid = Grid1D::covering(-1.0, 1.0, 80).unwrap();
        let rho = Density1D::new(grid, vec![0.5; 80]).unwrap();
        let pair = SpeciesPair::new(rho.clone(), rho.clone(), 1.0, 1.0).unwrap();
        let e = energy(&pair, &pair, &KernelTriple::zero()).unwrap();
        assert!((e - 0.5).abs() < 1e-12, "{e}");

        let pair0 = SpeciesPair::new(rho.clone(), rho, 1.0, 0.0).unwrap();
        assert_eq!(energy(&pair0, &pair0, &KernelTriple::zero()).unwrap(), 0.0);
    }

    #[test]
    fn energy_is_reflection_invariant() {
        let grid = Grid1D::covering(-2.0, 2.0, 128).unwrap();
        let rho = Density1D::from_segments(grid, &[(-1.2, 0.4, 0.7)]).unwrap();
        let eta = Density1D::from_segments(grid, &[(-0.3, 1.5, 0.4)]).unwrap();
        let pair = SpeciesPair::new(rho.clone(), eta.clone(), 0.7, 0.3).unwrap();
        let refl = SpeciesPair::new(rho.reflected(), eta.reflected(), 0.7, 0.3).unwrap();
        let kernels = KernelTriple::gaussian_default();
        let e = energy(&pair, &pair, &kernels).unwrap();
        let er = energy(&refl, &refl, &kernels).unwrap();
        assert!((e - er).abs() < 1e-12);
    }

    #[test]
    fn energy_rejects_grid_mismatch() {
        let a = uniform(0.0, 1.0, 32, 1.0);
        let b = uniform(0.0, 2.0, 32, 1.0);
        let pair = SpeciesPair::new(a.clone(), b, 1.0, 0.1).unwrap();
        let reference = SpeciesPair::new(a.clone(), a, 1.0, 0.1).unwrap();
        assert_eq!(
            energy(&pair, &reference, &KernelTriple::zero()).unwrap_err(),
            DensityError::GridMismatch
        );
    }

    #[test]
    fn segments_mass_is_exact() {
        let grid = Grid1D::covering(-4.0, 4.0, 71).unwrap();
        let d = Density1D::from_segments(grid, &[(-0.7, 0.7, 10.0 / 14.0)]).unwrap();
        assert!((d.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tabulated_zero_kernel_energy_consistency() {
        // Zero kernels built from tables behave like the analytic zero.
        let z = Kernel::zero();
        assert_eq!(z.eval(12.3).unwrap(), 0.0);
    }
}
