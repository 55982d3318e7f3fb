//! Solvers and diagnostics for a two-species nonlocal aggregation-diffusion
//! system in one dimension (predators `rho`, prey `eta`):
//!
//! ```text
//! d/dt rho = d/dx ( rho * d/dx ( d*rho - S_rho*rho - K*eta ) )
//! d/dt eta = d/dx ( eta * d/dx ( d*eta - S_eta*eta + alpha*K*rho ) )
//! ```
//!
//! where `*` inside the parentheses denotes convolution with smooth, even,
//! attractive kernels and `alpha > 0` is the escape propensity of the prey.
//!
//! The crate provides:
//! - [`kernels`]: radial interaction potentials with analytic derivatives,
//!   antiderivatives, and numeric checks of the modelling assumptions;
//! - [`density`]: cell-averaged densities, quantile (pseudo-inverse)
//!   representations, Wasserstein distances, and the relative energy
//!   functional;
//! - [`fv`]: a positivity-preserving semi-discrete finite-volume scheme with
//!   minmod-limited upwind fluxes and SSP-RK3 time stepping;
//! - [`particles`]: the deterministic particle method obtained by finite
//!   differences on the pseudo-inverse equations, driven by an embedded
//!   Runge-Kutta 2(3) integrator;
//! - [`steady`]: constructive multi-bump steady states (equilibrium centres,
//!   bump radii, Barenblatt profiles), stationarity residuals, and regime
//!   classification.
//!
//! The crate is `no_std` (with `alloc`); all transcendental math goes through
//! `libm`, so results are reproducible bit-for-bit across hosts.

#![cfg_attr(not(test), no_std)]
// Validation predicates are written as `!(x > 0.0)` on purpose (the negated
// form also rejects NaN), and the numeric kernels use indexed loops where
// the stencil structure is clearer than iterator chains.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

extern crate alloc;

pub mod density;
pub mod fv;
pub mod kernels;
pub mod particles;
pub mod steady;

pub use density::{Density1D, Grid1D, PseudoInverse, SpeciesPair};
pub use kernels::{Kernel, KernelTriple};

/// Per-species container for quantities that come in a predator/prey pair
/// without carrying solver parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PerSpecies<T> {
    pub rho: T,
    pub eta: T,
}

impl<T> PerSpecies<T> {
    pub fn new(rho: T, eta: T) -> Self {
        Self { rho, eta }
    }
}

/// Species tag used by operations whose sign convention differs between
/// predators and prey.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Species {
    Rho,
    Eta,
}

impl Species {
    /// Coupling coefficient in front of the cross-interaction term:
    /// `+1` for predators (attracted to prey), `-alpha` for prey (repelled).
    pub fn cross_coefficient(self, alpha: f64) -> f64 {
        match self {
            Species::Rho => 1.0,
            Species::Eta => -alpha,
        }
    }
}
