//! Scenario configuration: JSON schema, validation, the six built-in
//! experiments, and the reduction of unequal diffusion coefficients to a
//! common one.

use aggdiff_core::density::{Density1D, Grid1D};
use aggdiff_core::kernels::{Kernel, KernelTriple};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Kernel description as it appears in config files.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum KernelSpec {
    Gaussian { amplitude: f64, width: f64 },
    Tabulated { x: Vec<f64>, y: Vec<f64> },
}

impl KernelSpec {
    pub fn build(&self) -> Result<Kernel, CliError> {
        Ok(match self {
            KernelSpec::Gaussian { amplitude, width } => Kernel::gaussian(*amplitude, *width)?,
            KernelSpec::Tabulated { x, y } => Kernel::tabulated(x.clone(), y.clone())?,
        })
    }

    pub fn gaussian_default() -> Self {
        KernelSpec::Gaussian {
            amplitude: aggdiff_core::kernels::INV_SQRT_PI,
            width: 1.0,
        }
    }

    fn scaled(&self, factor: f64) -> Self {
        match self {
            KernelSpec::Gaussian { amplitude, width } => KernelSpec::Gaussian {
                amplitude: amplitude * factor,
                width: *width,
            },
            KernelSpec::Tabulated { x, y } => KernelSpec::Tabulated {
                x: x.clone(),
                y: y.iter().map(|v| v * factor).collect(),
            },
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KernelTripleSpec {
    pub s_rho: KernelSpec,
    pub s_eta: KernelSpec,
    pub k: KernelSpec,
}

impl KernelTripleSpec {
    pub fn build(&self) -> Result<KernelTriple, CliError> {
        Ok(KernelTriple::new(
            self.s_rho.build()?,
            self.s_eta.build()?,
            self.k.build()?,
        ))
    }

    pub fn gaussian_default() -> Self {
        Self {
            s_rho: KernelSpec::gaussian_default(),
            s_eta: KernelSpec::gaussian_default(),
            k: KernelSpec::gaussian_default(),
        }
    }
}

/// One piecewise-constant block of initial data on `[a, b]`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Segment {
    pub a: f64,
    pub b: f64,
    pub height: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InitialSpec {
    pub rho: Vec<Segment>,
    pub eta: Vec<Segment>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fv,
    Particles,
    Both,
}

/// Diffusion given either as a single `d` or as the pair `(d1, d2)`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DiffusionSpec {
    Common { d: f64 },
    PerSpecies { d1: f64, d2: f64 },
}

/// A complete experiment description (JSON config file schema).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub kernels: KernelTripleSpec,
    pub alpha: f64,
    #[serde(flatten)]
    pub diffusion: DiffusionSpec,
    pub domain: [f64; 2],
    pub n_cells: usize,
    pub n_particles: usize,
    pub t_final: f64,
    pub report_dt: f64,
    pub initial: InitialSpec,
    pub method: Method,
}

/// Scenario with kernels built and diffusion reduced to a common `d`.
pub struct PreparedScenario {
    pub scenario: Scenario,
    pub kernels: KernelTriple,
    pub alpha: f64,
    pub d: f64,
    pub grid: Grid1D,
    pub initial_rho: Density1D,
    pub initial_eta: Density1D,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        match self.diffusion {
            DiffusionSpec::Common { d } => {
                if !(d >= 0.0) || !d.is_finite() {
                    return bad(format!("d must be non-negative, got {d}"));
                }
            }
            DiffusionSpec::PerSpecies { d1, d2 } => {
                if !(d1 > 0.0) || !(d2 > 0.0) {
                    return bad(format!("d1 and d2 must be positive, got ({d1}, {d2})"));
                }
            }
        }
        if !(self.domain[1] > self.domain[0]) {
            return bad(format!("empty domain [{}, {}]", self.domain[0], self.domain[1]));
        }
        if self.n_cells < 2 || self.n_particles < 2 {
            return bad("need at least 2 cells and 2 particles".into());
        }
        if !(self.t_final > 0.0) || !(self.report_dt > 0.0) {
            return bad(format!(
                "t_final and report_dt must be positive, got ({}, {})",
                self.t_final, self.report_dt
            ));
        }
        for (species, segments) in [("rho", &self.initial.rho), ("eta", &self.initial.eta)] {
            if segments.is_empty() {
                return bad(format!("{species} needs at least one initial segment"));
            }
            let mut mass = 0.0;
            for s in segments {
                if !(s.b > s.a) {
                    return bad(format!("{species} segment [{}, {}] is empty", s.a, s.b));
                }
                if s.a < self.domain[0] || s.b > self.domain[1] {
                    return bad(format!(
                        "{species} segment [{}, {}] outside domain [{}, {}]",
                        s.a, s.b, self.domain[0], self.domain[1]
                    ));
                }
                if !(s.height >= 0.0) || !s.height.is_finite() {
                    return bad(format!("{species} segment height {} invalid", s.height));
                }
                mass += (s.b - s.a) * s.height;
            }
            if !(mass > 0.0) {
                return bad(format!("{species} initial mass must be positive"));
            }
        }
        Ok(())
    }

    /// Builds kernels, reduces `(d1, d2)` to a common coefficient if needed,
    /// and lays the initial data on the grid.
    pub fn prepare(&self) -> Result<PreparedScenario, CliError> {
        self.validate()?;
        let (d, kernel_spec, alpha) = match self.diffusion {
            DiffusionSpec::Common { d } => (d, self.kernels.clone(), self.alpha),
            DiffusionSpec::PerSpecies { d1, d2 } => {
                rescale_to_common_diffusion(d1, d2, &self.kernels, self.alpha)?
            }
        };
        let kernels = kernel_spec.build()?;
        let grid = Grid1D::covering(self.domain[0], self.domain[1], self.n_cells)
            .map_err(|e| CliError::Config(e.to_string()))?;
        let to_density = |segments: &[Segment]| -> Result<Density1D, CliError> {
            let segs: Vec<(f64, f64, f64)> = segments.iter().map(|s| (s.a, s.b, s.height)).collect();
            Density1D::from_segments(grid, &segs).map_err(|e| CliError::Config(e.to_string()))
        };
        Ok(PreparedScenario {
            scenario: self.clone(),
            kernels,
            alpha,
            d,
            grid,
            initial_rho: to_density(&self.initial.rho)?,
            initial_eta: to_density(&self.initial.eta)?,
        })
    }
}

/// Reduces per-species diffusion `(d1, d2)` to the single coefficient
/// `d = d2` by scaling the first equation: `S_rho` and `K` gain a factor
/// `d2/d1` and `alpha` one of `d1/d2`; `S_eta` is untouched. Steady states
/// are unchanged by this substitution.
pub fn rescale_to_common_diffusion(
    d1: f64,
    d2: f64,
    kernels: &KernelTripleSpec,
    alpha: f64,
) -> Result<(f64, KernelTripleSpec, f64), CliError> {
    if !(d1 > 0.0) || !(d2 > 0.0) {
        return Err(CliError::Config(format!(
            "diffusion coefficients must be positive, got ({d1}, {d2})"
        )));
    }
    let ratio = d2 / d1;
    Ok((
        d2,
        KernelTripleSpec {
            s_rho: kernels.s_rho.scaled(ratio),
            s_eta: kernels.s_eta.clone(),
            k: kernels.k.scaled(ratio),
        },
        alpha * d1 / d2,
    ))
}

#[allow(clippy::too_many_arguments)]
fn scenario(
    name: &str,
    alpha: f64,
    d: f64,
    domain: [f64; 2],
    n: usize,
    t_final: f64,
    rho: Vec<Segment>,
    eta: Vec<Segment>,
) -> Scenario {
    Scenario {
        name: name.into(),
        kernels: KernelTripleSpec::gaussian_default(),
        alpha,
        diffusion: DiffusionSpec::Common { d },
        domain,
        n_cells: n,
        n_particles: n,
        t_final,
        report_dt: 0.5,
        initial: InitialSpec { rho, eta },
        method: Method::Both,
    }
}

fn seg(a: f64, b: f64, height: f64) -> Segment {
    Segment { a, b, height }
}

/// The six built-in experiments. Kernels are the normalised Gaussian, the
/// particle count equals the cell count, and every species carries unit
/// mass. Domains and final times are our choices (the initial data,
/// parameters and resolutions are fixed by the experiments being
/// reproduced); domains are sized so supports never reach the boundary.
pub fn builtin_scenarios() -> Vec<Scenario> {
    vec![
        // Mixed steady state.
        scenario(
            "initial1",
            0.1,
            0.4,
            [-4.0, 4.0],
            71,
            40.0,
            vec![seg(-0.7, 0.7, 10.0 / 14.0)],
            vec![seg(-0.7, 0.7, 10.0 / 14.0)],
        ),
        // Separated steady state: prey flanking the predators.
        scenario(
            "initial2",
            0.2,
            0.4,
            [-9.0, 9.0],
            91,
            60.0,
            vec![seg(-1.0, 1.0, 0.5)],
            vec![seg(-4.0, -3.0, 0.5), seg(3.0, 4.0, 0.5)],
        ),
        // Same data as initial1 with a large escape propensity: the mixed
        // state breaks up.
        scenario(
            "initial1-alpha6",
            6.0,
            0.4,
            [-10.0, 10.0],
            71,
            260.0,
            vec![seg(-0.7, 0.7, 10.0 / 14.0)],
            vec![seg(-0.7, 0.7, 10.0 / 14.0)],
        ),
        // Four-bump steady state.
        scenario(
            "initial3",
            0.05,
            0.3,
            [-8.0, 8.0],
            181,
            35.0,
            vec![seg(-0.7, 0.7, 10.0 / 14.0)],
            vec![
                seg(-6.0, -5.0, 1.0 / 3.0),
                seg(-0.7, 0.7, 5.0 / 21.0),
                seg(5.0, 6.0, 1.0 / 3.0),
            ],
        ),
        // Five-bump steady state.
        scenario(
            "initial4",
            1.0,
            0.3,
            [-11.0, 11.0],
            181,
            30.0,
            vec![seg(-5.0, -4.0, 0.5), seg(4.0, 5.0, 0.5)],
            vec![
                seg(-9.0, -8.0, 1.0 / 3.0),
                seg(-0.5, 0.5, 1.0 / 3.0),
                seg(8.0, 9.0, 1.0 / 3.0),
            ],
        ),
        // Travelling wave: attack speed balancing escape speed.
        scenario(
            "initial5",
            1.0,
            0.2,
            [-4.0, 8.0],
            101,
            80.0,
            vec![seg(-0.6, 0.6, 10.0 / 12.0)],
            vec![seg(1.7, 2.9, 10.0 / 12.0)],
        ),
    ]
}

/// Looks up a built-in scenario by name.
pub fn builtin(name: &str) -> Option<Scenario> {
    builtin_scenarios().into_iter().find(|s| s.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_masses_match_the_closed_forms() {
        for sc in builtin_scenarios() {
            let prepared = sc.prepare().unwrap();
            let m_rho = prepared.initial_rho.mass();
            let m_eta = prepared.initial_eta.mass();
            assert!((m_rho - 1.0).abs() < 1e-12, "{}: rho mass {m_rho}", sc.name);
            assert!((m_eta - 1.0).abs() < 1e-12, "{}: eta mass {m_eta}", sc.name);
        }
    }

    #[test]
    fn builtin_parameters_are_the_published_ones() {
        let by_name = |n: &str| builtin(n).unwrap();
        let s1 = by_name("initial1");
        assert_eq!((s1.alpha, s1.n_cells), (0.1, 71));
        let s2 = by_name("initial2");
        assert_eq!((s2.alpha, s2.n_cells), (0.2, 91));
        let s3 = by_name("initial3");
        assert_eq!((s3.alpha, s3.n_cells), (0.05, 181));
        let s5 = by_name("initial5");
        assert_eq!((s5.alpha, s5.n_cells), (1.0, 101));
        match s5.diffusion {
            DiffusionSpec::Common { d } => assert_eq!(d, 0.2),
            _ => panic!("builtins use a common d"),
        }
    }

    #[test]
    fn rescale_identity_and_doubling() {
        let kernels = KernelTripleSpec::gaussian_default();
        let (d, k, a) = rescale_to_common_diffusion(0.4, 0.4, &kernels, 0.3).unwrap();
        assert_eq!((d, a), (0.4, 0.3));
        match k.s_rho {
            KernelSpec::Gaussian { amplitude, .. } => {
                assert!((amplitude - aggdiff_core::kernels::INV_SQRT_PI).abs() < 1e-15)
            }
            _ => panic!(),
        }

        let (d, k, a) = rescale_to_common_diffusion(0.2, 0.4, &kernels, 0.3).unwrap();
        assert_eq!(d, 0.4);
        assert!((a - 0.15).abs() < 1e-15);
        for spec in [&k.s_rho, &k.k] {
            match spec {
                KernelSpec::Gaussian { amplitude, .. } => {
                    assert!((amplitude - 2.0 * aggdiff_core::kernels::INV_SQRT_PI).abs() < 1e-15)
                }
                _ => panic!(),
            }
        }
        match k.s_eta {
            KernelSpec::Gaussian { amplitude, .. } => {
                assert!((amplitude - aggdiff_core::kernels::INV_SQRT_PI).abs() < 1e-15)
            }
            _ => panic!(),
        }
    }

    #[test]
    fn rescale_round_trip_recovers_alpha() {
        let kernels = KernelTripleSpec::gaussian_default();
        let alpha = 0.37;
        let (_, k1, a1) = rescale_to_common_diffusion(0.2, 0.4, &kernels, alpha).unwrap();
        let (_, _, a2) = rescale_to_common_diffusion(0.4, 0.2, &k1, a1).unwrap();
        assert!((a2 - alpha).abs() < 1e-15);
    }

    #[test]
    fn invalid_scenarios_are_rejected() {
        let mut sc = builtin("initial1").unwrap();
        sc.initial.rho[0].a = -10.0;
        assert!(matches!(sc.prepare(), Err(CliError::Config(_))));

        let mut sc = builtin("initial1").unwrap();
        sc.initial.eta[0].height = 0.0;
        assert!(matches!(sc.prepare(), Err(CliError::Config(_))));

        let mut sc = builtin("initial1").unwrap();
        sc.alpha = -1.0;
        assert!(matches!(sc.prepare(), Err(CliError::Config(_))));
    }

    #[test]
    fn scenario_json_round_trip() {
        let sc = builtin("initial3").unwrap();
        let text = serde_json::to_string_pretty(&sc).unwrap();
        let back: Scenario = serde_json::from_str(&text).unwrap();
        assert_eq!(back.name, sc.name);
        assert_eq!(back.n_cells, sc.n_cells);
        let p = back.prepare().unwrap();
        assert!((p.initial_eta.mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_spec_json_matches_documented_schema() {
        let text = r#"{"family":"gaussian","amplitude":0.5641895835,"width":1.0}"#;
        let spec: KernelSpec = serde_json::from_str(text).unwrap();
        let kernel = spec.build().unwrap();
        assert!((kernel.eval(0.0).unwrap() - 0.5641895835).abs() < 1e-9);

        let text = r#"{"family":"tabulated","x":[-1.0,0.0,1.0],"y":[0.0,0.0,0.0]}"#;
        let spec: KernelSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.build().unwrap().eval(0.5).unwrap(), 0.0);
    }
}
