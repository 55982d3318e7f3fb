//! Cross-validation of the finite-volume scheme against the particle method
//! and against the constructed Barenblatt steady states.

use aggdiff_core::density::{
    density_from_particles, joint_center, pseudo_inverse, wasserstein, Density1D, Grid1D,
    SpeciesPair,
};
use aggdiff_core::fv::FvWorkspace;
use aggdiff_core::kernels::{Kernel, KernelTriple};
use aggdiff_core::particles::integrate_rk23;
use aggdiff_core::steady::{analyze, build_state, BumpLayout, BumpSet};
use aggdiff_core::PerSpecies;

fn segments_pair(
    grid: Grid1D,
    rho: &[(f64, f64, f64)],
    eta: &[(f64, f64, f64)],
    alpha: f64,
    d: f64,
) -> SpeciesPair<Density1D> {
    SpeciesPair::new(
        Density1D::from_segments(grid, rho).unwrap(),
        Density1D::from_segments(grid, eta).unwrap(),
        alpha,
        d,
    )
    .unwrap()
}

fn particles_from(pair: &SpeciesPair<Density1D>, n: usize) -> SpeciesPair<aggdiff_core::PseudoInverse> {
    SpeciesPair::new(
        pseudo_inverse(&pair.rho, n).unwrap(),
        pseudo_inverse(&pair.eta, n).unwrap(),
        pair.alpha,
        pair.d,
    )
    .unwrap()
}

/// Both methods must drive predators towards prey and prey away from
/// predators, at comparable speed.
#[test]
fn cross_interaction_signs_agree_between_methods() {
    let alpha = 0.8;
    let grid = Grid1D::covering(-6.0, 6.0, 120).unwrap();
    let kernels = KernelTriple::new(Kernel::zero(), Kernel::zero(), Kernel::gaussian_default());
    let pair = segments_pair(grid, &[(-1.5, -0.5, 1.0)], &[(0.5, 1.5, 1.0)], alpha, 0.0);
    let t_final = 0.5;

    let mut ws = FvWorkspace::new(grid, kernels.clone(), alpha, 0.0, 0.45).unwrap();
    let fv_end = ws.simulate(&pair, t_final, t_final, |_, _, _| {}).unwrap();
    let fv_v_rho = (fv_end.rho.center_of_mass().unwrap() - pair.rho.center_of_mass().unwrap()) / t_final;
    let fv_v_eta = (fv_end.eta.center_of_mass().unwrap() - pair.eta.center_of_mass().unwrap()) / t_final;

    let state = particles_from(&pair, 120);
    let p_end = integrate_rk23(&state, &kernels, t_final, 1e-8, 1e-11, t_final, |_, _| {}).unwrap();
    let p_v_rho = (p_end.rho.mean_position() - state.rho.mean_position()) / t_final;
    let p_v_eta = (p_end.eta.mean_position() - state.eta.mean_position()) / t_final;

    // Predators chase (move right), prey flee (move right as well).
    assert!(fv_v_rho > 1e-3 && p_v_rho > 1e-3, "fv {fv_v_rho}, particles {p_v_rho}");
    assert!(fv_v_eta > 1e-3 && p_v_eta > 1e-3, "fv {fv_v_eta}, particles {p_v_eta}");
    // Same magnitudes up to discretization.
    assert!((fv_v_rho - p_v_rho).abs() < 0.1 * p_v_rho.abs().max(1e-3));
    assert!((fv_v_eta - p_v_eta).abs() < 0.1 * p_v_eta.abs().max(1e-3));
}

/// A small mixed scenario: after the transient both discretizations sit on
/// the same steady state to within two cell widths in transport distance.
#[test]
fn methods_agree_on_a_mixed_steady_state() {
    let alpha = 0.1;
    let d = 0.3;
    let n = 48;
    let grid = Grid1D::covering(-3.0, 3.0, n).unwrap();
    let kernels = KernelTriple::gaussian_default();
    let pair = segments_pair(grid, &[(-0.5, 0.5, 1.0)], &[(-0.5, 0.5, 1.0)], alpha, d);
    let t_final = 10.0;

    let mut ws = FvWorkspace::new(grid, kernels.clone(), alpha, d, 0.45).unwrap();
    let fv_end = ws.simulate(&pair, t_final, 1.0, |_, _, _| {}).unwrap();

    let state = particles_from(&pair, n);
    let p_end = integrate_rk23(&state, &kernels, t_final, 1e-6, 1e-9, 1.0, |_, _| {}).unwrap();
    let p_rho = density_from_particles(&p_end.rho, &grid).unwrap();
    let p_eta = density_from_particles(&p_end.eta, &grid).unwrap();

    let w_rho = wasserstein(&fv_end.rho, &p_rho, 1.0).unwrap();
    let w_eta = wasserstein(&fv_end.eta, &p_eta, 1.0).unwrap();
    assert!(w_rho <= 2.0 * grid.dx, "W1(rho) = {w_rho}, 2dx = {}", 2.0 * grid.dx);
    assert!(w_eta <= 2.0 * grid.dx, "W1(eta) = {w_eta}, 2dx = {}", 2.0 * grid.dx);

    // The conserved quantities stay conserved for both methods.
    assert!((fv_end.rho.mass() - 1.0).abs() < 1e-10);
    assert!((p_end.rho.mean_position() - 0.0).abs() < 1e-6);
    let cm_fv = joint_center(&fv_end).unwrap();
    assert!(cm_fv.abs() < 1e-6, "fv joint centre {cm_fv}");
}

/// Single species: the long-time finite-volume state matches the constructed
/// Barenblatt bump in transport distance.
#[test]
fn fv_steady_state_matches_barenblatt_profile() {
    let d = 0.05;
    let n = 128;
    let grid = Grid1D::covering(-2.0, 2.0, n).unwrap();
    let kernels = KernelTriple::gaussian_default();

    // eta stays empty: with a single species the cross terms never act.
    let rho0 = Density1D::from_segments(grid, &[(-0.5, 0.5, 1.0)]).unwrap();
    let pair = SpeciesPair::new(rho0, Density1D::zeros(grid), 1.0, d).unwrap();
    let mut ws = FvWorkspace::new(grid, kernels.clone(), 1.0, d, 0.45).unwrap();
    let end = ws.simulate(&pair, 25.0, 5.0, |_, _, _| {}).unwrap();

    // Constructed profile: one bump of unit mass at the origin; the inert
    // far-away prey bump carries negligible mass.
    let layout = BumpLayout::new(
        BumpSet::new(vec![1.0], vec![0.0]).unwrap(),
        BumpSet::new(vec![1e-12], vec![1.5]).unwrap(),
    );
    let analysis = analyze(&layout, &kernels, 1e-9);
    let profile = build_state(&layout, &analysis, &grid, 1e-9, d).unwrap();

    let w = wasserstein(&end.rho, &profile.pair.rho, 1.0).unwrap();
    assert!(w <= 2.0 * grid.dx, "W1 = {w}, 2dx = {}", 2.0 * grid.dx);
}

/// The relative energy with the reference re-frozen at the current state does
/// not increase along the finite-volume evolution (the minimizing-movement
/// descent structure).
#[test]
fn energy_descends_along_fv_trajectories() {
    let alpha = 0.1;
    let d = 0.4;
    let grid = Grid1D::covering(-4.0, 4.0, 71).unwrap();
    let kernels = KernelTriple::gaussian_default();
    let pair = segments_pair(grid, &[(-0.7, 0.7, 10.0 / 14.0)], &[(-0.7, 0.7, 10.0 / 14.0)], alpha, d);

    let mut ws = FvWorkspace::new(grid, kernels.clone(), alpha, d, 0.45).unwrap();
    let mut previous: Option<SpeciesPair<Density1D>> = None;
    let mut violations = 0u32;
    ws.simulate(&pair, 20.0, 0.25, |_, state, _| {
        if let Some(prev) = previous.take() {
            let before = aggdiff_core::density::energy(&prev, &prev, &kernels).unwrap();
            let after = aggdiff_core::density::energy(state, &prev, &kernels).unwrap();
            if after > before + 1e-8 {
                violations += 1;
            }
        }
        previous = Some(state.clone());
    })
    .unwrap();
    assert_eq!(violations, 0, "energy increased along the trajectory");
}

/// Particle joint centre of mass is conserved under the full dynamics.
#[test]
fn particle_joint_center_is_conserved() {
    let alpha = 1.0;
    let d = 0.2;
    let grid = Grid1D::covering(-4.0, 6.0, 100).unwrap();
    let kernels = KernelTriple::gaussian_default();
    let pair = segments_pair(
        grid,
        &[(-0.6, 0.6, 10.0 / 12.0)],
        &[(1.7, 2.9, 10.0 / 12.0)],
        alpha,
        d,
    );
    let state = particles_from(&pair, 64);
    let cm0 = alpha * state.rho.mean_position() - state.eta.mean_position();
    let t_final = 5.0;
    let end = integrate_rk23(&state, &kernels, t_final, 1e-6, 1e-9, 1.0, |_, _| {}).unwrap();
    let cm1 = alpha * end.rho.mean_position() - end.eta.mean_position();
    assert!(
        ((cm1 - cm0) / t_final).abs() <= 1e-5,
        "joint centre drift rate {}",
        (cm1 - cm0) / t_final
    );
}

/// Residual of the constructed two-prey/one-predator state decreases with d.
#[test]
fn stationarity_residual_decreases_with_diffusion() {
    let kernels = KernelTriple::gaussian_default();
    let alpha = 0.2;
    let masses = PerSpecies::new(vec![1.0], vec![0.5, 0.5]);
    let guess = PerSpecies::new(vec![0.0], vec![-1.0, 1.0]);
    let layout =
        aggdiff_core::steady::solve_centers(&masses, &kernels, alpha, 0.0, &guess).unwrap();
    let analysis = analyze(&layout, &kernels, alpha);

    let grid = Grid1D::covering(-3.0, 3.0, 3000).unwrap();
    let mut residuals = Vec::new();
    for d in [1e-2, 1e-3, 1e-4] {
        let state = build_state(&layout, &analysis, &grid, alpha, d).unwrap();
        let res = aggdiff_core::steady::stationarity_residual(&state.pair, &kernels).unwrap();
        let max = res
            .rho
            .iter()
            .chain(res.eta.iter())
            .cloned()
            .fold(0.0f64, f64::max);
        residuals.push(max);
    }
    assert!(residuals[0] <= 0.02, "residual at d=1e-2: {}", residuals[0]);
    // Monotone decrease with 10% slack.
    assert!(residuals[1] <= residuals[0] * 1.1, "{residuals:?}");
    assert!(residuals[2] <= residuals[1] * 1.1, "{residuals:?}");
}
