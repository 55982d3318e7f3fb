//! Radial interaction potentials.
//!
//! The model assumes all kernels are C^2, even, non-negative and
//! non-increasing in the radial variable. The default potential is the
//! normalised Gaussian `S(x) = exp(-x^2) / sqrt(pi)`. A tabulated family with
//! cubic-spline interpolation exists so that tests and configurations can
//! inject other shapes (including deliberately pathological ones); tabulated
//! kernels are extended by zero outside their sample range.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// `1 / sqrt(pi)`, the default Gaussian amplitude.
pub const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

#[derive(Clone, Debug, PartialEq)]
pub enum KernelError {
    /// Argument of an evaluation was NaN or infinite.
    NonFiniteArgument(f64),
    /// Construction or check parameters were invalid.
    Invalid(String),
}

impl core::fmt::Display for KernelError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            KernelError::NonFiniteArgument(x) => write!(f, "non-finite kernel argument {x}"),
            KernelError::Invalid(msg) => write!(f, "invalid kernel: {msg}"),
        }
    }
}

impl core::error::Error for KernelError {}

/// A radial interaction potential with analytic first and second derivatives
/// and the odd antiderivative `G` pinned by `G(0) = 0`.
#[derive(Clone, Debug)]
pub struct Kernel {
    family: Family,
}

#[derive(Clone, Debug)]
enum Family {
    Gaussian { amplitude: f64, width: f64 },
    Tabulated(CubicSpline),
}

impl Kernel {
    /// Gaussian `amplitude * exp(-(x/width)^2)`.
    pub fn gaussian(amplitude: f64, width: f64) -> Result<Self, KernelError> {
        if !amplitude.is_finite() || !width.is_finite() || width <= 0.0 {
            return Err(KernelError::Invalid(format!(
                "gaussian needs finite amplitude and positive width, got ({amplitude}, {width})"
            )));
        }
        Ok(Self {
            family: Family::Gaussian { amplitude, width },
        })
    }

    /// The normalised Gaussian `exp(-x^2)/sqrt(pi)`.
    pub fn gaussian_default() -> Self {
        Self {
            family: Family::Gaussian {
                amplitude: INV_SQRT_PI,
                width: 1.0,
            },
        }
    }

    /// Kernel interpolating the samples `(xs[i], ys[i])` with a natural cubic
    /// spline, zero outside `[xs[0], xs[last]]`.
    pub fn tabulated(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, KernelError> {
        Ok(Self {
            family: Family::Tabulated(CubicSpline::new(xs, ys)?),
        })
    }

    /// The identically-zero kernel (used to switch interactions off).
    pub fn zero() -> Self {
        Self {
            family: Family::Tabulated(
                CubicSpline::new(vec![-1.0, 0.0, 1.0], vec![0.0, 0.0, 0.0])
                    .expect("static table is valid"),
            ),
        }
    }

    /// Same kernel with values multiplied by `factor` (used by the
    /// `d1 = d2` rescaling).
    pub fn scaled(&self, factor: f64) -> Self {
        match &self.family {
            Family::Gaussian { amplitude, width } => Self {
                family: Family::Gaussian {
                    amplitude: amplitude * factor,
                    width: *width,
                },
            },
            Family::Tabulated(sp) => Self {
                family: Family::Tabulated(sp.scaled(factor)),
            },
        }
    }

    pub fn is_gaussian(&self) -> bool {
        matches!(self.family, Family::Gaussian { .. })
    }

    /// `(amplitude, width)` for Gaussian kernels, `None` otherwise.
    pub fn gaussian_parameters(&self) -> Option<(f64, f64)> {
        match self.family {
            Family::Gaussian { amplitude, width } => Some((amplitude, width)),
            Family::Tabulated(_) => None,
        }
    }

    /// Sample table `(xs, ys)` for tabulated kernels, `None` otherwise.
    pub fn table(&self) -> Option<(&[f64], &[f64])> {
        match &self.family {
            Family::Gaussian { .. } => None,
            Family::Tabulated(sp) => Some((&sp.xs, &sp.ys)),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, KernelError> {
        check_finite(x)?;
        Ok(self.eval_raw(x))
    }

    pub fn eval_d1(&self, x: f64) -> Result<f64, KernelError> {
        check_finite(x)?;
        Ok(self.d1_raw(x))
    }

    pub fn eval_d2(&self, x: f64) -> Result<f64, KernelError> {
        check_finite(x)?;
        Ok(self.d2_raw(x))
    }

    /// Antiderivative `G` with `G' = S` and `G(0) = 0` (odd for even kernels).
    pub fn antider(&self, x: f64) -> Result<f64, KernelError> {
        check_finite(x)?;
        Ok(self.antider_raw(x))
    }

    pub(crate) fn eval_raw(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { amplitude, width } => {
                let u = x / width;
                amplitude * libm::exp(-u * u)
            }
            Family::Tabulated(sp) => sp.eval(x),
        }
    }

    pub(crate) fn d1_raw(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { amplitude, width } => {
                let u = x / width;
                -2.0 * u / width * amplitude * libm::exp(-u * u)
            }
            Family::Tabulated(sp) => sp.eval_d1(x),
        }
    }

    pub(crate) fn d2_raw(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { amplitude, width } => {
                let u = x / width;
                let w2 = width * width;
                amplitude * libm::exp(-u * u) * (4.0 * u * u - 2.0) / w2
            }
            Family::Tabulated(sp) => sp.eval_d2(x),
        }
    }

    pub(crate) fn antider_raw(&self, x: f64) -> f64 {
        match &self.family {
            Family::Gaussian { amplitude, width } => {
                // int_0^x A exp(-(t/w)^2) dt = A w sqrt(pi)/2 erf(x/w)
                amplitude * width * (0.886_226_925_452_758 * libm::erf(x / width))
            }
            Family::Tabulated(sp) => sp.integral_from_zero(x),
        }
    }
}

fn check_finite(x: f64) -> Result<(), KernelError> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(KernelError::NonFiniteArgument(x))
    }
}

/// The three potentials of the model: self-interactions `s_rho`, `s_eta` and
/// the cross-interaction `k`.
#[derive(Clone, Debug)]
pub struct KernelTriple {
    pub s_rho: Kernel,
    pub s_eta: Kernel,
    pub k: Kernel,
}

impl KernelTriple {
    pub fn new(s_rho: Kernel, s_eta: Kernel, k: Kernel) -> Self {
        Self { s_rho, s_eta, k }
    }

    /// All three kernels equal to the normalised Gaussian, the choice used in
    /// every built-in scenario.
    pub fn gaussian_default() -> Self {
        Self {
            s_rho: Kernel::gaussian_default(),
            s_eta: Kernel::gaussian_default(),
            k: Kernel::gaussian_default(),
        }
    }

    /// All interactions off; only diffusion acts.
    pub fn zero() -> Self {
        Self {
            s_rho: Kernel::zero(),
            s_eta: Kernel::zero(),
            k: Kernel::zero(),
        }
    }
}

/// Numeric verdict on the modelling assumptions for one kernel, sampled on
/// `[-radius, radius]`.
#[derive(Clone, Debug)]
pub struct KernelAssumptions {
    pub symmetric: bool,
    pub nonincreasing_radial: bool,
    pub nonnegative: bool,
    /// Largest interval around 0 on which the sampled second derivative is
    /// negative; feeds the alpha-threshold diagnostics.
    pub concavity_range: (f64, f64),
}

/// Assumption reports for the triple, in the order `s_rho`, `s_eta`, `k`.
#[derive(Clone, Debug)]
pub struct AssumptionReport {
    pub s_rho: KernelAssumptions,
    pub s_eta: KernelAssumptions,
    pub k: KernelAssumptions,
}

/// Samples each kernel of the triple on `[-radius, radius]` and reports
/// whether it is even, radially non-increasing and non-negative, together
/// with the numeric concavity range around the origin.
pub fn check_assumptions(
    triple: &KernelTriple,
    radius: f64,
    n_samples: usize,
) -> Result<AssumptionReport, KernelError> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(KernelError::Invalid(format!("radius must be positive, got {radius}")));
    }
    if n_samples < 3 {
        return Err(KernelError::Invalid(format!("need at least 3 samples, got {n_samples}")));
    }
    Ok(AssumptionReport {
        s_rho: check_kernel(&triple.s_rho, radius, n_samples),
        s_eta: check_kernel(&triple.s_eta, radius, n_samples),
        k: check_kernel(&triple.k, radius, n_samples),
    })
}

fn check_kernel(kernel: &Kernel, radius: f64, n_samples: usize) -> KernelAssumptions {
    let mut max_abs = 0.0f64;
    let mut values = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let x = -radius + 2.0 * radius * (i as f64) / ((n_samples - 1) as f64);
        let v = kernel.eval_raw(x);
        max_abs = max_abs.max(libm::fabs(v));
        values.push((x, v));
    }
    let tol = 1e-9 * (1.0 + max_abs);

    let mut symmetric = true;
    let mut nonnegative = true;
    for &(x, v) in &values {
        if v < -tol {
            nonnegative = false;
        }
        if libm::fabs(v - kernel.eval_raw(-x)) > tol {
            symmetric = false;
        }
    }

    let mut nonincreasing = true;
    let mut prev: Option<f64> = None;
    for &(x, v) in values.iter().filter(|(x, _)| *x >= 0.0) {
        let _ = x;
        if let Some(p) = prev {
            if v > p + tol {
                nonincreasing = false;
            }
        }
        prev = Some(v);
    }

    // Scan the positive half-axis for the first sign change of S'' and refine
    // it by bisection; the range is symmetric because the kernel is radial.
    let half_step = radius / ((n_samples - 1) as f64);
    let mut bound = radius;
    let mut x_prev = 0.0;
    let mut found = false;
    let mut x = 0.0;
    while x <= radius + 0.5 * half_step {
        let xq = x.min(radius);
        if kernel.d2_raw(xq) >= 0.0 {
            bound = if xq == 0.0 {
                0.0
            } else {
                bisect_sign_change(|t| kernel.d2_raw(t), x_prev, xq)
            };
            found = true;
            break;
        }
        x_prev = xq;
        x += half_step;
    }
    if !found {
        bound = radius;
    }

    KernelAssumptions {
        symmetric,
        nonincreasing_radial: nonincreasing,
        nonnegative,
        concavity_range: (-bound, bound),
    }
}

fn bisect_sign_change(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    // f(lo) < 0 <= f(hi)
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Natural cubic spline through strictly increasing knots, zero outside the
/// knot range.
#[derive(Clone, Debug)]
struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
    /// Cumulative integral from xs[0] to each knot.
    prefix: Vec<f64>,
    /// Cumulative integral from xs[0] to 0, so integral_from_zero(0) == 0.
    at_zero: f64,
}

impl CubicSpline {
    fn new(xs: Vec<f64>, ys: Vec<f64>) -> Result<Self, KernelError> {
        if xs.len() != ys.len() {
            return Err(KernelError::Invalid(format!(
                "table length mismatch: {} x-values vs {} y-values",
                xs.len(),
                ys.len()
            )));
        }
        if xs.len() < 2 {
            return Err(KernelError::Invalid("table needs at least 2 samples".into()));
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(KernelError::Invalid(format!(
                    "table abscissae must be strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
        if xs.iter().chain(ys.iter()).any(|v| !v.is_finite()) {
            return Err(KernelError::Invalid("table contains non-finite entries".into()));
        }

        let n = xs.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            // Thomas algorithm for the natural-spline tridiagonal system.
            let dim = n - 2;
            let mut diag = vec![0.0; dim];
            let mut upper = vec![0.0; dim];
            let mut rhs = vec![0.0; dim];
            for i in 0..dim {
                let h0 = xs[i + 1] - xs[i];
                let h1 = xs[i + 2] - xs[i + 1];
                diag[i] = (h0 + h1) / 3.0;
                upper[i] = h1 / 6.0;
                rhs[i] = (ys[i + 2] - ys[i + 1]) / h1 - (ys[i + 1] - ys[i]) / h0;
            }
            for i in 1..dim {
                let h0 = xs[i + 1] - xs[i];
                let w = (h0 / 6.0) / diag[i - 1];
                diag[i] -= w * upper[i - 1];
                rhs[i] -= w * rhs[i - 1];
            }
            m[dim] = rhs[dim - 1] / diag[dim - 1];
            for i in (0..dim - 1).rev() {
                m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
            }
        }

        let mut prefix = vec![0.0; n];
        for i in 0..n - 1 {
            let h = xs[i + 1] - xs[i];
            let seg = 0.5 * h * (ys[i] + ys[i + 1]) - h * h * h * (m[i] + m[i + 1]) / 24.0;
            prefix[i + 1] = prefix[i] + seg;
        }

        let mut spline = Self {
            xs,
            ys,
            m,
            prefix,
            at_zero: 0.0,
        };
        spline.at_zero = spline.integral_from_left(0.0);
        Ok(spline)
    }

    fn scaled(&self, factor: f64) -> Self {
        Self {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|y| y * factor).collect(),
            m: self.m.iter().map(|m| m * factor).collect(),
            prefix: self.prefix.iter().map(|p| p * factor).collect(),
            at_zero: self.at_zero * factor,
        }
    }

    fn segment(&self, x: f64) -> usize {
        let n = self.xs.len();
        self.xs.partition_point(|&k| k <= x).clamp(1, n - 1) - 1
    }

    fn eval(&self, x: f64) -> f64 {
        if x < self.xs[0] || x > self.xs[self.xs.len() - 1] {
            return 0.0;
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.ys[i]
            + b * self.ys[i + 1]
            + ((a * a * a - a) * self.m[i] + (b * b * b - b) * self.m[i + 1]) * h * h / 6.0
    }

    fn eval_d1(&self, x: f64) -> f64 {
        if x < self.xs[0] || x > self.xs[self.xs.len() - 1] {
            return 0.0;
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        (self.ys[i + 1] - self.ys[i]) / h
            + ((3.0 * b * b - 1.0) * self.m[i + 1] - (3.0 * a * a - 1.0) * self.m[i]) * h / 6.0
    }

    fn eval_d2(&self, x: f64) -> f64 {
        if x < self.xs[0] || x > self.xs[self.xs.len() - 1] {
            return 0.0;
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let a = (self.xs[i + 1] - x) / h;
        let b = (x - self.xs[i]) / h;
        a * self.m[i] + b * self.m[i + 1]
    }

    /// Integral from the left end of the table to `x` (clamped to the table).
    fn integral_from_left(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return 0.0;
        }
        if x >= self.xs[n - 1] {
            return self.prefix[n - 1];
        }
        let i = self.segment(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let one_t = 1.0 - t;
        let lin = self.ys[i] * (t - 0.5 * t * t) + self.ys[i + 1] * 0.5 * t * t;
        let cubic = self.m[i] * (0.5 * one_t * one_t - 0.25 * one_t * one_t * one_t * one_t - 0.25)
            + self.m[i + 1] * (0.25 * t * t * t * t - 0.5 * t * t);
        self.prefix[i] + h * lin + h * h * h / 6.0 * cubic
    }

    fn integral_from_zero(&self, x: f64) -> f64 {
        self.integral_from_left(x) - self.at_zero
    }
}
