//! Semi-implicit time stepping: every step solves the linear problem
//! `(M + tau K_w) u^k = M u^{k-1}` with element weights `w_T = phi'(r) / r`
//! frozen at `r = |grad u^{k-1}_T|`, and tracks the discrete energy balance
//! `E[u^L] + tau sum ||d_t u^k||^2 + tau^2/2 sum int w^{k-1} |d_t grad u^k|^2 <= E[u^0]`.

use crate::energy::{energy_of_gradients, Density, DensityKind, OrliczDensity};
use crate::error::{FlowError, Result};
use crate::fem::{gradients_of, DirichletMask, FeFunction, P1Assembler};
use crate::linsolve::{cg_solve_from, CgOptions, SparseMatrix};
use crate::mesh::Mesh;
use crate::scalar::{dot, norm, sub, Real, Vec2};

/// Radius at which a weight that is singular at the origin is evaluated instead.
pub const SINGULAR_WEIGHT_RADIUS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FlowConfig<T> {
    pub density: Density<T>,
    pub tau: T,
    pub t_end: T,
    pub dirichlet: DirichletMask,
    /// Drive the system with the lumped mass matrix. The stability report
    /// always measures `d_t u` in the consistent mass norm.
    pub lumped_mass: bool,
    /// Relative residual target of the linear solver.
    pub cg_tol: T,
    pub cg_max_iter: Option<usize>,
    /// Retain every state instead of only the last one.
    pub keep_trajectory: bool,
}

impl<T: Real> FlowConfig<T> {
    pub fn new(density: Density<T>, tau: T, t_end: T, dirichlet: DirichletMask) -> Self {
        FlowConfig {
            density,
            tau,
            t_end,
            dirichlet,
            lumped_mass: false,
            cg_tol: T::lit(1e-12),
            cg_max_iter: None,
            keep_trajectory: false,
        }
    }

    pub fn validate(&self, mesh: &Mesh<T>) -> Result<()> {
        if !(self.tau > T::zero() && self.tau.is_finite()) {
            return Err(FlowError::InvalidParameter(format!("time step must be positive, got {}", self.tau)));
        }
        if !(self.t_end >= self.tau && self.t_end.is_finite()) {
            return Err(FlowError::InvalidParameter(format!(
                "final time {} must be at least the time step {}",
                self.t_end, self.tau
            )));
        }
        if self.density.kind != DensityKind::PrandtlEyring && !(self.density.eps > T::zero()) {
            return Err(FlowError::InvalidParameter(
                "the semi-implicit scheme needs a positive regularization eps".into(),
            ));
        }
        if !(self.cg_tol > T::zero()) {
            return Err(FlowError::InvalidParameter(format!("cg_tol must be positive, got {}", self.cg_tol)));
        }
        if self.dirichlet.len() != mesh.n_vertices() {
            return Err(FlowError::DimensionMismatch { expected: mesh.n_vertices(), got: self.dirichlet.len() });
        }
        Ok(())
    }

    /// `K = floor(T / tau)`.
    pub fn n_steps(&self) -> usize {
        step_count(self.tau, self.t_end)
    }

    pub fn cg_options(&self) -> CgOptions<T> {
        CgOptions { tol: self.cg_tol, max_iter: self.cg_max_iter, jacobi: true }
    }
}

/// Largest `K` with `K tau <= t_end`, forgiving a relative rounding error of
/// `1e-12` in the quotient.
pub fn step_count<T: Real>(tau: T, t_end: T) -> usize {
    let q = (t_end / tau).as_f64();
    if !(q.is_finite() && q > 0.0) {
        return 0;
    }
    (q * (1.0 + 1e-12)).floor() as usize
}

/// Fills `out` with `phi'(|g_T|) / |g_T|`. A weight that is singular at a
/// vanishing gradient is evaluated at [`SINGULAR_WEIGHT_RADIUS`]; the number
/// of such elements is returned.
pub fn element_weights<T: Real>(density: &Density<T>, grads: &[Vec2<T>], out: &mut Vec<T>) -> Result<usize> {
    out.clear();
    out.reserve(grads.len());
    let mut floored = 0;
    for g in grads {
        let r = norm(*g);
        let w = match density.weight(r) {
            Ok(w) => w,
            Err(FlowError::SingularWeight) if density.kind == DensityKind::PrandtlEyring => {
                floored += 1;
                density.weight(T::lit(SINGULAR_WEIGHT_RADIUS))?
            }
            Err(e) => return Err(e),
        };
        out.push(w);
    }
    Ok(floored)
}

/// Reusable workspace for repeated steps on one mesh.
#[derive(Debug, Clone)]
pub struct SemiImplicitSolver<'m, T> {
    assembler: P1Assembler<'m, T>,
    cfg: FlowConfig<T>,
    system_mass: SparseMatrix<T>,
    stiffness: SparseMatrix<T>,
    system: SparseMatrix<T>,
    weights: Vec<T>,
    warned: bool,
}

impl<'m, T: Real> SemiImplicitSolver<'m, T> {
    pub fn new(mesh: &'m Mesh<T>, cfg: FlowConfig<T>) -> Result<Self> {
        cfg.validate(mesh)?;
        let assembler = P1Assembler::new(mesh);
        let system_mass = assembler.mass(cfg.lumped_mass);
        let stiffness = assembler.zero_matrix();
        let system = assembler.zero_matrix();
        Ok(SemiImplicitSolver { assembler, cfg, system_mass, stiffness, system, weights: Vec::new(), warned: false })
    }

    pub fn config(&self) -> &FlowConfig<T> {
        &self.cfg
    }

    /// The constrained system `(A, b)` of the step from `u_prev`; constrained
    /// rows are unit rows with zero data.
    pub fn assemble(&mut self, u_prev: &FeFunction<T>) -> Result<(SparseMatrix<T>, Vec<T>)> {
        let rhs = self.assemble_in_place(u_prev)?;
        Ok((self.system.clone(), rhs))
    }

    fn assemble_in_place(&mut self, u_prev: &FeFunction<T>) -> Result<Vec<T>> {
        let mesh = self.assembler.mesh();
        u_prev.belongs_to(mesh)?;
        if !self.cfg.dirichlet.satisfied_by(u_prev.coeffs()) {
            return Err(FlowError::InvalidParameter("state violates the Dirichlet constraint".into()));
        }
        let grads = gradients_of(mesh, u_prev.coeffs());
        let floored = element_weights(&self.cfg.density, &grads, &mut self.weights)?;
        if floored > 0 && !self.warned {
            log::warn!(
                "{floored} elements with vanishing gradient: weight evaluated at r = {SINGULAR_WEIGHT_RADIUS:e}"
            );
            self.warned = true;
        }
        self.assembler.weighted_stiffness_into(&self.weights, &mut self.stiffness)?;
        self.system.assign_combination(T::one(), &self.system_mass, self.cfg.tau, &self.stiffness)?;
        let mut rhs = self.system_mass.mul_vec(u_prev.coeffs())?;
        self.cfg.dirichlet.eliminate(&mut self.system, &mut rhs)?;
        Ok(rhs)
    }

    /// One step from `u_prev`, warm-starting the solver at `u_prev`.
    pub fn step(&mut self, u_prev: &FeFunction<T>) -> Result<FeFunction<T>> {
        let rhs = self.assemble_in_place(u_prev)?;
        let sol = cg_solve_from(&self.system, &rhs, u_prev.coeffs().to_vec(), &self.cfg.cg_options(), |_, _| {})?;
        u_prev.with_coeffs(sol.x)
    }
}

/// Solves `(M + tau K_w) u = M u_prev` on the unconstrained nodes.
pub fn semi_implicit_step<T: Real>(mesh: &Mesh<T>, u_prev: &FeFunction<T>, cfg: &FlowConfig<T>) -> Result<FeFunction<T>> {
    SemiImplicitSolver::new(mesh, cfg.clone())?.step(u_prev)
}

/// Running terms of the energy balance, indexed by the step `L = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport<T> {
    /// `E[u^L]`.
    pub energies: Vec<T>,
    /// `tau sum_{k <= L} ||d_t u^k||_M^2` with the consistent mass matrix.
    pub kinetic: Vec<T>,
    /// `tau^2/2 sum_{k <= L} sum_T |T| w_T^{k-1} |d_t grad u^k_T|^2`.
    pub dissipation: Vec<T>,
    /// `E[u^0] - (E[u^L] + kinetic + dissipation)`.
    pub slack: Vec<T>,
    /// Whether the scheme itself was driven by the lumped mass matrix.
    pub lumped_system_mass: bool,
}

impl<T: Real> StabilityReport<T> {
    pub fn n_steps(&self) -> usize {
        self.energies.len().saturating_sub(1)
    }

    pub fn initial_energy(&self) -> T {
        self.energies.first().copied().unwrap_or_else(T::zero)
    }

    /// Minimum slack over all prefixes.
    pub fn min_slack(&self) -> T {
        stability_slack(self)
    }

    /// Minimum slack divided by `E[u^0]` (unscaled when the initial energy vanishes).
    pub fn min_relative_slack(&self) -> T {
        let e0 = self.initial_energy();
        let s = self.min_slack();
        if e0 > T::zero() {
            s / e0
        } else {
            s
        }
    }

    /// `E[u^k] <= E[u^{k-1}] + rel_tol E[u^0]` for every `k`.
    pub fn energies_nonincreasing(&self, rel_tol: T) -> bool {
        let allowance = rel_tol * self.initial_energy().abs();
        self.energies.windows(2).all(|w| w[1] <= w[0] + allowance)
    }

    /// Balance and monotonicity both hold up to `rel_tol`.
    pub fn is_stable(&self, rel_tol: T) -> bool {
        self.min_relative_slack() >= -rel_tol && self.energies_nonincreasing(rel_tol)
    }

    /// Recomputes the report for a stored trajectory `states[0..=K]`.
    pub fn from_trajectory(
        mesh: &Mesh<T>,
        states: &[FeFunction<T>],
        density: &Density<T>,
        tau: T,
        lumped_system_mass: bool,
    ) -> Result<Self> {
        let first = states.first().ok_or_else(|| FlowError::InvalidParameter("empty trajectory".into()))?;
        let mass = P1Assembler::new(mesh).mass(false);
        let mut monitor = StabilityMonitor::new(mesh, &mass, *density, tau, first)?;
        for u in &states[1..] {
            monitor.push(u)?;
        }
        let mut report = monitor.into_report();
        report.lumped_system_mass = lumped_system_mass;
        Ok(report)
    }
}

/// Minimum of the slack over `L = 0..=K`; zero for an empty report.
pub fn stability_slack<T: Real>(report: &StabilityReport<T>) -> T {
    report.slack.iter().copied().fold(T::zero(), T::min)
}

/// Incremental evaluation of the energy balance along a trajectory.
#[derive(Debug, Clone)]
pub struct StabilityMonitor<'a, T> {
    mesh: &'a Mesh<T>,
    mass: &'a SparseMatrix<T>,
    density: Density<T>,
    tau: T,
    prev: Vec<T>,
    prev_grads: Vec<Vec2<T>>,
    prev_weights: Vec<T>,
    report: StabilityReport<T>,
}

impl<'a, T: Real> StabilityMonitor<'a, T> {
    /// `mass` is the consistent mass matrix of `mesh`.
    pub fn new(
        mesh: &'a Mesh<T>,
        mass: &'a SparseMatrix<T>,
        density: Density<T>,
        tau: T,
        u0: &FeFunction<T>,
    ) -> Result<Self> {
        u0.belongs_to(mesh)?;
        if mass.n() != mesh.n_vertices() {
            return Err(FlowError::DimensionMismatch { expected: mesh.n_vertices(), got: mass.n() });
        }
        let prev_grads = gradients_of(mesh, u0.coeffs());
        let mut prev_weights = Vec::new();
        element_weights(&density, &prev_grads, &mut prev_weights)?;
        let e0 = energy_of_gradients(mesh, &prev_grads, &density);
        let report = StabilityReport {
            energies: vec![e0],
            kinetic: vec![T::zero()],
            dissipation: vec![T::zero()],
            slack: vec![T::zero()],
            lumped_system_mass: false,
        };
        Ok(StabilityMonitor { mesh, mass, density, tau, prev: u0.coeffs().to_vec(), prev_grads, prev_weights, report })
    }

    /// Appends the next state `u^k`.
    pub fn push(&mut self, u: &FeFunction<T>) -> Result<()> {
        u.belongs_to(self.mesh)?;
        let du: Vec<T> = u.coeffs().iter().zip(&self.prev).map(|(&a, &b)| a - b).collect();
        // tau ||d_t u||^2 = ||u^k - u^{k-1}||^2 / tau
        let kinetic_inc = self.mass.quadratic_form(&du)?.max(T::zero()) / self.tau;
        let grads = gradients_of(self.mesh, u.coeffs());
        let half = T::lit(0.5);
        // tau^2/2 |d_t g|^2 = |g^k - g^{k-1}|^2 / 2
        let dissipation_inc: T = grads
            .iter()
            .zip(&self.prev_grads)
            .zip(&self.prev_weights)
            .zip(self.mesh.geometries())
            .map(|(((g, gp), &w), geo)| {
                let d = sub(*g, *gp);
                half * geo.area * w * dot(d, d)
            })
            .sum();
        let energy = energy_of_gradients(self.mesh, &grads, &self.density);
        let r = &mut self.report;
        let kinetic = *r.kinetic.last().expect("nonempty") + kinetic_inc;
        let dissipation = *r.dissipation.last().expect("nonempty") + dissipation_inc;
        r.slack.push(r.energies[0] - (energy + kinetic + dissipation));
        r.energies.push(energy);
        r.kinetic.push(kinetic);
        r.dissipation.push(dissipation);
        element_weights(&self.density, &grads, &mut self.prev_weights)?;
        self.prev_grads = grads;
        self.prev.copy_from_slice(u.coeffs());
        Ok(())
    }

    pub fn report(&self) -> &StabilityReport<T> {
        &self.report
    }

    pub fn into_report(self) -> StabilityReport<T> {
        self.report
    }
}

/// Result of a full run.
#[derive(Debug, Clone)]
pub struct FlowRun<T> {
    /// All states `u^0..u^K` when the trajectory is kept, otherwise only `u^K`.
    pub states: Vec<FeFunction<T>>,
    pub report: StabilityReport<T>,
    pub n_steps: usize,
}

impl<T: Real> FlowRun<T> {
    pub fn final_state(&self) -> &FeFunction<T> {
        self.states.last().expect("a run holds at least one state")
    }
}

/// Runs `K = floor(T / tau)` steps from `u0`.
pub fn run_semi_implicit<T: Real>(mesh: &Mesh<T>, u0: &FeFunction<T>, cfg: &FlowConfig<T>) -> Result<FlowRun<T>> {
    run_semi_implicit_with(mesh, u0, cfg, |_, _, _| {})
}

/// As [`run_semi_implicit`]; `observer(k, t_k, u^k)` sees every state including `u^0`.
pub fn run_semi_implicit_with<T: Real, F: FnMut(usize, T, &FeFunction<T>)>(
    mesh: &Mesh<T>,
    u0: &FeFunction<T>,
    cfg: &FlowConfig<T>,
    mut observer: F,
) -> Result<FlowRun<T>> {
    u0.belongs_to(mesh)?;
    let mut solver = SemiImplicitSolver::new(mesh, cfg.clone())?;
    if !cfg.dirichlet.satisfied_by(u0.coeffs()) {
        return Err(FlowError::InvalidParameter("initial datum violates the Dirichlet constraint".into()));
    }
    let mass = solver.assembler.mass(false);
    let mut monitor = StabilityMonitor::new(mesh, &mass, cfg.density, cfg.tau, u0)?;
    let n_steps = cfg.n_steps();
    let mut states = vec![u0.clone()];
    observer(0, T::zero(), u0);
    let mut current = u0.clone();
    for k in 1..=n_steps {
        let next = solver.step(&current).map_err(|e| e.at_step(k))?;
        monitor.push(&next).map_err(|e| e.at_step(k))?;
        observer(k, T::from_usize_lossy(k) * cfg.tau, &next);
        if cfg.keep_trajectory {
            states.push(next.clone());
        }
        current = next;
    }
    if !cfg.keep_trajectory {
        states = vec![current];
    }
    let mut report = monitor.into_report();
    report.lumped_system_mass = cfg.lumped_mass;
    Ok(FlowRun { states, report, n_steps })
}
