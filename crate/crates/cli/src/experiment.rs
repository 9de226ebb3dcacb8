//! Runs of the schemes against the exact solutions and convergence studies.

use flowlab_core::energy::{energy, Density, Regularization};
use flowlab_core::fem::{assemble_mass, l2_error, m_norm_coeffs, nodal_interpolate};
use flowlab_core::implicit::{run_implicit_with, AdmmParams, FixedPointParams, ImplicitConfig, ImplicitScheme};
use flowlab_core::semi_implicit::run_semi_implicit_with;
use flowlab_core::{
    build_square_mesh, DirichletMask, ExactSolution, FeFunction, FlowConfig, FlowError, Mesh, StabilityReport,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Boundary, EpsMode, ErrorNorm, ExperimentConfig, Scheme, HALF_WIDTH};
use crate::error::{ExperimentError, Result};

/// Energy-balance terms of a semi-implicit run, indexed by step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilitySummary {
    pub kinetic: Vec<f64>,
    pub dissipation: Vec<f64>,
    pub slack: Vec<f64>,
    pub min_slack: f64,
    pub min_relative_slack: f64,
    pub energies_nonincreasing: bool,
    pub lumped_system_mass: bool,
}

impl From<&StabilityReport<f64>> for StabilitySummary {
    fn from(r: &StabilityReport<f64>) -> Self {
        StabilitySummary {
            kinetic: r.kinetic.clone(),
            dissipation: r.dissipation.clone(),
            slack: r.slack.clone(),
            min_slack: r.min_slack(),
            min_relative_slack: r.min_relative_slack(),
            energies_nonincreasing: r.energies_nonincreasing(1e-12),
            lumped_system_mass: r.lumped_system_mass,
        }
    }
}

/// Derived quantities and solver statistics of a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    pub h: f64,
    pub eps: f64,
    pub tau: f64,
    pub n_steps: usize,
    pub n_vertices: usize,
    pub n_elements: usize,
    /// ADMM stopping bound, for ADMM runs.
    pub delta_stop: Option<f64>,
    /// Inner iterations (ADMM or fixed point) per implicit step.
    pub inner_iterations: Vec<usize>,
    /// Final inner residual per implicit step.
    pub inner_residuals: Vec<f64>,
    /// Final ADMM penalty per step.
    pub penalties: Vec<f64>,
}

/// Errors and energies at every `t_k = k tau`, `k = 0..=K`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorSeries {
    pub config: ExperimentConfig,
    pub times: Vec<f64>,
    pub l2_errors: Vec<f64>,
    pub energies: Vec<f64>,
    pub max_error: f64,
    pub stability: Option<StabilitySummary>,
    pub metadata: RunMetadata,
}

fn density_for(cfg: &ExperimentConfig) -> Result<Density<f64>> {
    let eps = cfg.eps();
    Ok(match cfg.scheme {
        Scheme::ImplicitAdmm => Density::p_dirichlet(Regularization::Standard, 1.0, 0.0)?,
        Scheme::Semi | Scheme::ImplicitFp => Density::p_dirichlet(cfg.regularization, cfg.p, eps)?,
    })
}

fn mask_for(cfg: &ExperimentConfig, mesh: &Mesh<f64>) -> DirichletMask {
    match cfg.bc {
        Boundary::Dirichlet => DirichletMask::boundary(mesh),
        Boundary::Neumann => DirichletMask::none(mesh),
    }
}

/// Builds the mesh, interpolates the exact datum, runs the configured scheme
/// and evaluates the `L^2` error at every time step.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ErrorSeries> {
    cfg.validate()?;
    let mesh = build_square_mesh::<f64>(cfg.level, HALF_WIDTH)?;
    let exact = ExactSolution::with_dim(cfg.example.kind(), 2);
    let u0 = if cfg.zero_datum {
        FeFunction::zeros(&mesh)
    } else {
        nodal_interpolate(&mesh, |x| exact.initial(&x))
    };
    let mask = mask_for(cfg, &mesh);
    let mut u0 = u0;
    mask.apply(u0.coeffs_mut());
    let density = density_for(cfg)?;
    let (h, tau) = (cfg.mesh_size(), cfg.tau());
    let mass = assemble_mass(&mesh, false);

    let mut times = Vec::new();
    let mut l2_errors = Vec::new();
    let mut energies = Vec::new();
    let mut failure: Option<FlowError> = None;
    let mut observe = |_k: usize, t: f64, u: &FeFunction<f64>| {
        let err = match cfg.error_norm {
            ErrorNorm::Interpolant => {
                let target = nodal_interpolate(&mesh, |x| exact.eval(t, &x));
                let diff: Vec<f64> = u.coeffs().iter().zip(target.coeffs()).map(|(a, b)| a - b).collect();
                m_norm_coeffs(&diff, &mass)
            }
            ErrorNorm::Quadrature => l2_error(&mesh, u, |x| exact.eval(t, &x), cfg.subdiv),
        };
        let measured = err.and_then(|e| Ok((e, energy(&mesh, u, &density)?)));
        match measured {
            Ok((e, en)) => {
                times.push(t);
                l2_errors.push(e);
                energies.push(en);
            }
            Err(err) => {
                failure.get_or_insert(err);
            }
        }
    };

    let mut metadata = RunMetadata {
        h,
        eps: cfg.eps(),
        tau,
        n_steps: 0,
        n_vertices: mesh.n_vertices(),
        n_elements: mesh.n_elements(),
        delta_stop: None,
        inner_iterations: Vec::new(),
        inner_residuals: Vec::new(),
        penalties: Vec::new(),
    };
    let stability = match cfg.scheme {
        Scheme::Semi => {
            let mut flow = FlowConfig::new(density, tau, cfg.t_end, mask);
            flow.lumped_mass = cfg.lumped_mass;
            flow.cg_tol = cfg.cg_tol;
            let run = run_semi_implicit_with(&mesh, &u0, &flow, &mut observe)?;
            metadata.n_steps = run.n_steps;
            Some(StabilitySummary::from(&run.report))
        }
        Scheme::ImplicitAdmm | Scheme::ImplicitFp => {
            let scheme = if cfg.scheme == Scheme::ImplicitAdmm {
                let mut p = AdmmParams::new(cfg.delta_stop());
                p.rho0 = cfg.rho0;
                p.max_iter = cfg.admm_max_iter;
                p.cg_tol = cfg.cg_tol;
                metadata.delta_stop = Some(p.delta_stop);
                ImplicitScheme::Admm(p)
            } else {
                let mut p = FixedPointParams::new(density, cfg.inner_tol);
                p.max_inner = cfg.max_inner;
                p.cg_tol = cfg.cg_tol;
                ImplicitScheme::FixedPoint(p)
            };
            let icfg = ImplicitConfig { tau, t_end: cfg.t_end, scheme, dirichlet: mask, keep_trajectory: false };
            let run = run_implicit_with(&mesh, &u0, &icfg, &mut observe)?;
            metadata.n_steps = run.n_steps;
            metadata.inner_iterations = run.steps.iter().map(|s| s.iterations).collect();
            metadata.inner_residuals = run.steps.iter().map(|s| s.residual).collect();
            metadata.penalties = run.steps.iter().filter_map(|s| s.rho).collect();
            None
        }
    };
    if let Some(err) = failure {
        return Err(err.into());
    }
    let max_error = l2_errors.iter().copied().fold(0.0, f64::max);
    Ok(ErrorSeries { config: cfg.clone(), times, l2_errors, energies, max_error, stability, metadata })
}

/// One cell of a convergence table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub level: usize,
    pub h: f64,
    pub eps_mode: EpsMode,
    /// Missing when the run failed.
    pub max_l2_error: Option<f64>,
    /// `log2(err_{l-1} / err_l)` against the previous level of the same column.
    pub rate: Option<f64>,
    pub scheme: Scheme,
    /// `ok`, `not-converged` or `failed`.
    pub status: String,
}

fn status_of(err: &ExperimentError) -> &'static str {
    let mut e = match err {
        ExperimentError::Flow(f) => f,
        _ => return "failed",
    };
    while let FlowError::Step { source, .. } = e {
        e = source;
    }
    match e {
        FlowError::AdmmNotConverged { .. }
        | FlowError::FixedPointNotConverged { .. }
        | FlowError::CgNotConverged { .. } => "not-converged",
        _ => "failed",
    }
}

/// Maximal errors for every `(eps mode, level)` cell, columns in the order of
/// `eps_modes` and levels ascending. Cells run concurrently; failures are
/// recorded per cell.
pub fn convergence_study(base: &ExperimentConfig, levels: &[usize], eps_modes: &[EpsMode]) -> Result<Vec<TableRow>> {
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ExperimentError::Config("levels must be nonempty and strictly ascending".into()));
    }
    if eps_modes.is_empty() {
        return Err(ExperimentError::Config("at least one eps mode is required".into()));
    }
    let cells: Vec<ExperimentConfig> = eps_modes
        .iter()
        .flat_map(|&mode| {
            levels.iter().map(move |&level| ExperimentConfig {
                level,
                eps_mode: Some(mode),
                output: None,
                ..base.clone()
            })
        })
        .collect();
    for cell in &cells {
        cell.validate()?;
    }
    let outcomes: Vec<(ExperimentConfig, Result<f64>)> =
        cells.into_par_iter().map(|cell| {
            let r = run_experiment(&cell).map(|s| s.max_error);
            (cell, r)
        }).collect();
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut previous: Option<(EpsMode, Option<f64>)> = None;
    for (cell, outcome) in outcomes {
        let mode = cell.eps_mode();
        let (err, status) = match &outcome {
            Ok(e) => (Some(*e), "ok"),
            Err(e) => {
                log::warn!("level {} eps {}: {e}", cell.level, mode);
                (None, status_of(e))
            }
        };
        let rate = match (previous, err) {
            (Some((m, Some(prev))), Some(cur)) if m == mode && cur > 0.0 => Some((prev / cur).log2()),
            _ => None,
        };
        previous = Some((mode, err));
        rows.push(TableRow {
            level: cell.level,
            h: cell.mesh_size(),
            eps_mode: mode,
            max_l2_error: err,
            rate,
            scheme: cell.scheme,
            status: status.to_string(),
        });
    }
    Ok(rows)
}

/// Energy-balance check of one step size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityCheck {
    pub tau: f64,
    pub n_steps: usize,
    pub min_slack: f64,
    pub min_relative_slack: f64,
    pub energies_nonincreasing: bool,
    pub stable: bool,
}

/// Runs the semi-implicit scheme of `base` with each step size in `taus` up to
/// `max(t_end, min_steps * tau)` and evaluates the energy balance.
pub fn check_stability(base: &ExperimentConfig, taus: &[f64], min_steps: usize, rel_tol: f64) -> Result<Vec<StabilityCheck>> {
    if base.scheme != Scheme::Semi {
        return Err(ExperimentError::Config("check-stability applies to the semi-implicit scheme".into()));
    }
    base.validate()?;
    let mesh = build_square_mesh::<f64>(base.level, HALF_WIDTH)?;
    let exact = ExactSolution::with_dim(base.example.kind(), 2);
    let mask = mask_for(base, &mesh);
    let mut u0 = if base.zero_datum {
        FeFunction::zeros(&mesh)
    } else {
        nodal_interpolate(&mesh, |x| exact.initial(&x))
    };
    mask.apply(u0.coeffs_mut());
    let density = density_for(base)?;
    taus.iter()
        .map(|&tau| {
            let t_end = base.t_end.max(min_steps as f64 * tau);
            let mut flow = FlowConfig::new(density, tau, t_end, mask.clone());
            flow.lumped_mass = base.lumped_mass;
            flow.cg_tol = base.cg_tol;
            let run = run_semi_implicit_with(&mesh, &u0, &flow, |_, _, _| {})?;
            let r = &run.report;
            let nonincreasing = r.energies_nonincreasing(rel_tol);
            Ok(StabilityCheck {
                tau,
                n_steps: run.n_steps,
                min_slack: r.min_slack(),
                min_relative_slack: r.min_relative_slack(),
                energies_nonincreasing: nonincreasing,
                stable: r.min_relative_slack() >= -rel_tol && nonincreasing,
            })
        })
        .collect()
}
