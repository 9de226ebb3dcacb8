//! Implicit Euler steps `u^k = argmin_v ||v - u^{k-1}||_M^2 / (2 tau) + E[v]`.
//!
//! Total variation (`p = 1`, `eps = 0`) is handled by ADMM on the splitting
//! `d = grad v` with residual-balancing penalty updates; any density with
//! `eps > 0` can be handled by the lagged-weight fixed-point iteration, which
//! is a majorize-minimize scheme and decreases the step objective monotonically.

use crate::energy::{energy_of_gradients, Density, DensityKind, OrliczDensity};
use crate::error::{FlowError, Result};
use crate::fem::{gradients_of, weighted_gradient_transpose, DirichletMask, FeFunction, P1Assembler};
use crate::linsolve::{cg_solve_from, CgOptions, SparseMatrix};
use crate::mesh::Mesh;
use crate::scalar::{dot, norm, scale, sub, Real, Vec2};
use crate::semi_implicit::{element_weights, step_count};

/// Bounds of the ADMM penalty.
pub const RHO_MIN: f64 = 1e-8;
pub const RHO_MAX: f64 = 1e8;

/// Proximal map of `threshold |.|`: `0` if `|q| <= threshold`, else `(1 - threshold/|q|) q`.
pub fn shrink<T: Real>(q: Vec2<T>, threshold: T) -> Vec2<T> {
    let r = norm(q);
    if r <= threshold {
        [T::zero(); 2]
    } else {
        scale(T::one() - threshold / r, q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmParams<T> {
    pub rho0: T,
    /// Penalty is rebalanced when one residual exceeds `mu` times the other.
    pub mu: T,
    /// Factor applied to the penalty when rebalancing.
    pub scale: T,
    /// Bound on `sqrt(primal^2 + dual^2)`.
    pub delta_stop: T,
    pub max_iter: usize,
    pub cg_tol: T,
}

impl<T: Real> AdmmParams<T> {
    pub fn new(delta_stop: T) -> Self {
        AdmmParams {
            rho0: T::one(),
            mu: T::lit(10.0),
            scale: T::lit(2.0),
            delta_stop,
            max_iter: 20_000,
            cg_tol: T::lit(1e-12),
        }
    }

    /// `delta_stop = h^5`.
    pub fn for_mesh_size(h: T) -> Self {
        Self::new(h.powi(5))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(FlowError::InvalidParameter(what.into()));
        if !(self.delta_stop > T::zero()) {
            return bad("delta_stop must be positive");
        }
        if !(self.rho0 >= T::lit(RHO_MIN) && self.rho0 <= T::lit(RHO_MAX)) {
            return bad("rho0 must lie in [1e-8, 1e8]");
        }
        if !(self.mu > T::one() && self.scale > T::one()) {
            return bad("mu and scale must exceed 1");
        }
        if self.max_iter == 0 {
            return bad("max_iter must be positive");
        }
        if !(self.cg_tol > T::zero()) {
            return bad("cg_tol must be positive");
        }
        Ok(())
    }
}

/// Iterates of the splitting: nodal `v`, element-wise `d ~ grad v`, the
/// multiplier `lambda` and the penalty `rho`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmmState<T> {
    pub v: Vec<T>,
    pub d: Vec<Vec2<T>>,
    pub lambda: Vec<Vec2<T>>,
    pub rho: T,
}

impl<T: Real> AdmmState<T> {
    /// `v = u`, `d = grad u`, `lambda = 0`.
    pub fn new(mesh: &Mesh<T>, u: &FeFunction<T>, rho0: T) -> Result<Self> {
        u.belongs_to(mesh)?;
        Ok(AdmmState {
            v: u.coeffs().to_vec(),
            d: gradients_of(mesh, u.coeffs()),
            lambda: vec![[T::zero(); 2]; mesh.n_elements()],
            rho: rho0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmStats<T> {
    pub iterations: usize,
    /// `sqrt(sum_T |T| |grad v_T - d_T|^2)`.
    pub primal: T,
    /// `rho sqrt(sum_T |T| |d_T - d_T^old|^2)`.
    pub dual: T,
    /// Penalty after the final iteration.
    pub rho: T,
}

/// ADMM workspace for total variation steps on one mesh.
#[derive(Debug, Clone)]
pub struct AdmmSolver<'m, T> {
    mesh: &'m Mesh<T>,
    mask: DirichletMask,
    tau: T,
    params: AdmmParams<T>,
    mass: SparseMatrix<T>,
    stiffness: SparseMatrix<T>,
    system: SparseMatrix<T>,
    system_rho: Option<T>,
}

impl<'m, T: Real> AdmmSolver<'m, T> {
    pub fn new(mesh: &'m Mesh<T>, tau: T, params: AdmmParams<T>, mask: DirichletMask) -> Result<Self> {
        params.validate()?;
        if !(tau > T::zero()) {
            return Err(FlowError::InvalidParameter(format!("time step must be positive, got {tau}")));
        }
        if mask.len() != mesh.n_vertices() {
            return Err(FlowError::DimensionMismatch { expected: mesh.n_vertices(), got: mask.len() });
        }
        let assembler = P1Assembler::new(mesh);
        let mass = assembler.mass(false);
        let stiffness = assembler.weighted_stiffness(&vec![T::one(); mesh.n_elements()])?;
        let system = assembler.zero_matrix();
        Ok(AdmmSolver { mesh, mask, tau, params, mass, stiffness, system, system_rho: None })
    }

    pub fn params(&self) -> &AdmmParams<T> {
        &self.params
    }

    /// Runs ADMM from `state` until the combined residual drops below
    /// `delta_stop`; `state` holds the final iterates afterwards.
    pub fn step(&mut self, u_prev: &FeFunction<T>, state: &mut AdmmState<T>) -> Result<(FeFunction<T>, AdmmStats<T>)> {
        let mesh = self.mesh;
        u_prev.belongs_to(mesh)?;
        if !self.mask.satisfied_by(u_prev.coeffs()) {
            return Err(FlowError::InvalidParameter("state violates the Dirichlet constraint".into()));
        }
        if state.v.len() != mesh.n_vertices() {
            return Err(FlowError::DimensionMismatch { expected: mesh.n_vertices(), got: state.v.len() });
        }
        if state.d.len() != mesh.n_elements() || state.lambda.len() != mesh.n_elements() {
            return Err(FlowError::DimensionMismatch { expected: mesh.n_elements(), got: state.d.len() });
        }
        let inv_tau = T::one() / self.tau;
        let data: Vec<T> = self.mass.mul_vec(u_prev.coeffs())?.into_iter().map(|m| m * inv_tau).collect();
        let cg = CgOptions::with_tol(self.params.cg_tol);
        let (rho_min, rho_max) = (T::lit(RHO_MIN), T::lit(RHO_MAX));
        let mut stats = AdmmStats { iterations: 0, primal: T::zero(), dual: T::zero(), rho: state.rho };
        for it in 1..=self.params.max_iter {
            let rho = state.rho;
            if self.system_rho != Some(rho) {
                self.system.assign_combination(inv_tau, &self.mass, rho, &self.stiffness)?;
                let mut scratch = vec![T::zero(); mesh.n_vertices()];
                self.mask.eliminate(&mut self.system, &mut scratch)?;
                self.system_rho = Some(rho);
            }
            let q: Vec<Vec2<T>> = state.d.iter().zip(&state.lambda).map(|(d, l)| sub(scale(rho, *d), *l)).collect();
            let mut rhs = weighted_gradient_transpose(mesh, &q);
            rhs.iter_mut().zip(&data).for_each(|(r, &b)| *r += b);
            self.mask.apply(&mut rhs);
            let v0 = std::mem::take(&mut state.v);
            state.v = cg_solve_from(&self.system, &rhs, v0, &cg, |_, _| {})?.x;

            let grads = gradients_of(mesh, &state.v);
            let inv_rho = T::one() / rho;
            let (mut primal_sq, mut dual_sq) = (T::zero(), T::zero());
            for (((g, d), l), geo) in grads.iter().zip(&mut state.d).zip(&mut state.lambda).zip(mesh.geometries()) {
                let d_new = shrink([g[0] + l[0] * inv_rho, g[1] + l[1] * inv_rho], inv_rho);
                let r = sub(*g, d_new);
                let s = sub(d_new, *d);
                primal_sq += geo.area * dot(r, r);
                dual_sq += geo.area * dot(s, s);
                l[0] += rho * r[0];
                l[1] += rho * r[1];
                *d = d_new;
            }
            let primal = primal_sq.sqrt();
            let dual = rho * dual_sq.sqrt();
            stats = AdmmStats { iterations: it, primal, dual, rho };
            if primal.hypot(dual) <= self.params.delta_stop {
                return Ok((u_prev.with_coeffs(state.v.clone())?, stats));
            }
            // The multiplier is kept unscaled, so only the penalty changes.
            if primal > self.params.mu * dual {
                state.rho = (rho * self.params.scale).min(rho_max);
            } else if dual > self.params.mu * primal {
                state.rho = (rho / self.params.scale).max(rho_min);
            }
            stats.rho = state.rho;
        }
        Err(FlowError::AdmmNotConverged {
            iterations: stats.iterations,
            primal: stats.primal.as_f64(),
            dual: stats.dual.as_f64(),
        })
    }
}

/// One total variation implicit step from a fresh splitting state.
pub fn implicit_step_admm<T: Real>(
    mesh: &Mesh<T>,
    u_prev: &FeFunction<T>,
    tau: T,
    params: &AdmmParams<T>,
    mask: &DirichletMask,
) -> Result<(FeFunction<T>, AdmmStats<T>)> {
    let mut solver = AdmmSolver::new(mesh, tau, *params, mask.clone())?;
    let mut state = AdmmState::new(mesh, u_prev, params.rho0)?;
    solver.step(u_prev, &mut state)
}

/// `||v - u_prev||_M^2 / (2 tau) + E[v]`.
pub fn step_objective<T: Real, D: OrliczDensity<T> + ?Sized>(
    mesh: &Mesh<T>,
    mass: &SparseMatrix<T>,
    u_prev: &[T],
    v: &[T],
    tau: T,
    density: &D,
) -> Result<T> {
    let diff: Vec<T> = v.iter().zip(u_prev).map(|(&a, &b)| a - b).collect();
    let fidelity = mass.quadratic_form(&diff)? / (T::lit(2.0) * tau);
    Ok(fidelity + energy_of_gradients(mesh, &gradients_of(mesh, v), density))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPointParams<T> {
    pub density: Density<T>,
    /// Bound on the mass-norm increment between sweeps.
    pub inner_tol: T,
    pub max_inner: usize,
    pub cg_tol: T,
}

impl<T: Real> FixedPointParams<T> {
    pub fn new(density: Density<T>, inner_tol: T) -> Self {
        FixedPointParams { density, inner_tol, max_inner: 10_000, cg_tol: T::lit(1e-12) }
    }

    pub fn validate(&self) -> Result<()> {
        if self.density.kind != DensityKind::PrandtlEyring && !(self.density.eps > T::zero()) {
            return Err(FlowError::InvalidParameter("the fixed-point iteration needs eps > 0".into()));
        }
        if !(self.inner_tol > T::zero()) || self.max_inner == 0 || !(self.cg_tol > T::zero()) {
            return Err(FlowError::InvalidParameter("inner tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointStats<T> {
    pub iterations: usize,
    /// Mass-norm size of the last increment.
    pub increment: T,
    /// Step objective at the initial guess and after every sweep.
    pub objective: Vec<T>,
}

/// Implicit step by the iteration `(M + tau K_{w(grad w_j)}) w_{j+1} = M u_prev`
/// started at `w_0 = u_prev`.
pub fn implicit_step_fixedpoint<T: Real>(
    mesh: &Mesh<T>,
    u_prev: &FeFunction<T>,
    tau: T,
    params: &FixedPointParams<T>,
    mask: &DirichletMask,
) -> Result<(FeFunction<T>, FixedPointStats<T>)> {
    params.validate()?;
    u_prev.belongs_to(mesh)?;
    if !(tau > T::zero()) {
        return Err(FlowError::InvalidParameter(format!("time step must be positive, got {tau}")));
    }
    if mask.len() != mesh.n_vertices() {
        return Err(FlowError::DimensionMismatch { expected: mesh.n_vertices(), got: mask.len() });
    }
    if !mask.satisfied_by(u_prev.coeffs()) {
        return Err(FlowError::InvalidParameter("state violates the Dirichlet constraint".into()));
    }
    let assembler = P1Assembler::new(mesh);
    let mass = assembler.mass(false);
    let mut stiffness = assembler.zero_matrix();
    let mut system = assembler.zero_matrix();
    let data = mass.mul_vec(u_prev.coeffs())?;
    let cg = CgOptions::with_tol(params.cg_tol);
    let mut weights = Vec::new();
    let mut w = u_prev.coeffs().to_vec();
    let mut objective = vec![step_objective(mesh, &mass, u_prev.coeffs(), &w, tau, &params.density)?];
    let mut increment = T::infinity();
    for sweep in 1..=params.max_inner {
        element_weights(&params.density, &gradients_of(mesh, &w), &mut weights)?;
        assembler.weighted_stiffness_into(&weights, &mut stiffness)?;
        system.assign_combination(T::one(), &mass, tau, &stiffness)?;
        let mut rhs = data.clone();
        mask.eliminate(&mut system, &mut rhs)?;
        let next = cg_solve_from(&system, &rhs, w.clone(), &cg, |_, _| {})?.x;
        let diff: Vec<T> = next.iter().zip(&w).map(|(&a, &b)| a - b).collect();
        increment = mass.quadratic_form(&diff)?.max(T::zero()).sqrt();
        w = next;
        objective.push(step_objective(mesh, &mass, u_prev.coeffs(), &w, tau, &params.density)?);
        if increment <= params.inner_tol {
            let stats = FixedPointStats { iterations: sweep, increment, objective };
            return Ok((u_prev.with_coeffs(w)?, stats));
        }
    }
    Err(FlowError::FixedPointNotConverged { iterations: params.max_inner, increment: increment.as_f64() })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ImplicitScheme<T> {
    Admm(AdmmParams<T>),
    FixedPoint(FixedPointParams<T>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitConfig<T> {
    pub tau: T,
    pub t_end: T,
    pub scheme: ImplicitScheme<T>,
    pub dirichlet: DirichletMask,
    pub keep_trajectory: bool,
}

/// Solver metadata of one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImplicitStepInfo<T> {
    pub iterations: usize,
    /// ADMM: combined residual. Fixed point: last increment.
    pub residual: T,
    /// ADMM penalty at the end of the step.
    pub rho: Option<T>,
}

#[derive(Debug, Clone)]
pub struct ImplicitRun<T> {
    /// All states `u^0..u^K` when the trajectory is kept, otherwise only `u^K`.
    pub states: Vec<FeFunction<T>>,
    pub steps: Vec<ImplicitStepInfo<T>>,
    pub n_steps: usize,
}

impl<T: Real> ImplicitRun<T> {
    pub fn final_state(&self) -> &FeFunction<T> {
        self.states.last().expect("a run holds at least one state")
    }
}

pub fn run_implicit<T: Real>(mesh: &Mesh<T>, u0: &FeFunction<T>, cfg: &ImplicitConfig<T>) -> Result<ImplicitRun<T>> {
    run_implicit_with(mesh, u0, cfg, |_, _, _| {})
}

/// Runs `K = floor(T / tau)` implicit steps; `observer(k, t_k, u^k)` sees
/// every state including `u^0`. The ADMM splitting state is carried over
/// between time steps.
pub fn run_implicit_with<T: Real, F: FnMut(usize, T, &FeFunction<T>)>(
    mesh: &Mesh<T>,
    u0: &FeFunction<T>,
    cfg: &ImplicitConfig<T>,
    mut observer: F,
) -> Result<ImplicitRun<T>> {
    u0.belongs_to(mesh)?;
    if !(cfg.tau > T::zero() && cfg.t_end >= cfg.tau) {
        return Err(FlowError::InvalidParameter("need 0 < tau <= t_end".into()));
    }
    if !cfg.dirichlet.satisfied_by(u0.coeffs()) {
        return Err(FlowError::InvalidParameter("initial datum violates the Dirichlet constraint".into()));
    }
    let n_steps = step_count(cfg.tau, cfg.t_end);
    let mut admm = match &cfg.scheme {
        ImplicitScheme::Admm(p) => {
            Some((AdmmSolver::new(mesh, cfg.tau, *p, cfg.dirichlet.clone())?, AdmmState::new(mesh, u0, p.rho0)?))
        }
        ImplicitScheme::FixedPoint(p) => {
            p.validate()?;
            None
        }
    };
    let mut states = vec![u0.clone()];
    let mut steps = Vec::with_capacity(n_steps);
    observer(0, T::zero(), u0);
    let mut current = u0.clone();
    for k in 1..=n_steps {
        let (next, info) = match (&cfg.scheme, admm.as_mut()) {
            (ImplicitScheme::Admm(_), Some((solver, state))) => {
                let (v, s) = solver.step(&current, state).map_err(|e| e.at_step(k))?;
                (v, ImplicitStepInfo { iterations: s.iterations, residual: s.primal.hypot(s.dual), rho: Some(s.rho) })
            }
            (ImplicitScheme::FixedPoint(p), _) => {
                let (w, s) =
                    implicit_step_fixedpoint(mesh, &current, cfg.tau, p, &cfg.dirichlet).map_err(|e| e.at_step(k))?;
                (w, ImplicitStepInfo { iterations: s.iterations, residual: s.increment, rho: None })
            }
            (ImplicitScheme::Admm(_), None) => unreachable!("ADMM workspace is built for the ADMM scheme"),
        };
        observer(k, T::from_usize_lossy(k) * cfg.tau, &next);
        steps.push(info);
        if cfg.keep_trajectory {
            states.push(next.clone());
        }
        current = next;
    }
    if !cfg.keep_trajectory {
        states = vec![current];
    }
    Ok(ImplicitRun { states, steps, n_steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::Regularization;
    use crate::exact::ExactSolution;
    use crate::fem::{assemble_mass, m_norm_coeffs, nodal_interpolate, total_variation};
    use crate::mesh::build_square_mesh;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn disk_datum(mesh: &Mesh<f64>) -> FeFunction<f64> {
        let disk = ExactSolution::disk();
        nodal_interpolate(mesh, |x| disk.initial(&x))
    }

    fn tv() -> Density<f64> {
        Density::p_dirichlet(Regularization::Standard, 1.0, 0.0).unwrap()
    }

    #[test]
    fn shrink_examples() {
        assert_eq!(shrink([3.0, 0.0], 1.0), [2.0, 0.0]);
        assert_eq!(shrink([0.6, 0.8], 1.0), [0.0, 0.0]);
        assert_eq!(shrink([0.3, -0.1], 0.5), [0.0, 0.0]);
        for k in 0..32 {
            let th = 0.2 * k as f64;
            let (c, s) = (th.cos(), th.sin());
            let rot = |q: [f64; 2]| [c * q[0] - s * q[1], s * q[0] + c * q[1]];
            let q = [1.3, -2.1];
            let a = shrink(rot(q), 0.7);
            let b = rot(shrink(q, 0.7));
            assert!((a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_datum_converges_immediately() {
        let mesh = build_square_mesh::<f64>(3, 1.5).unwrap();
        let zero = FeFunction::zeros(&mesh);
        let params = AdmmParams::for_mesh_size(mesh.mesh_size());
        let (v, stats) = implicit_step_admm(&mesh, &zero, 0.1, &params, &DirichletMask::boundary(&mesh)).unwrap();
        assert_eq!(stats.iterations, 1);
        assert!(v.coeffs().iter().all(|&c| c == 0.0));
    }

    /// Minimizes `J(alpha)` over the single interior coefficient of the level-1
    /// mesh by a grid search with step `1e-6` refined by golden sections.
    fn brute_force_center(mesh: &Mesh<f64>, u_prev: &FeFunction<f64>, tau: f64, center: usize) -> f64 {
        let mass = assemble_mass(mesh, false);
        let objective = |alpha: f64| {
            let mut v = vec![0.0; mesh.n_vertices()];
            v[center] = alpha;
            step_objective(mesh, &mass, u_prev.coeffs(), &v, tau, &tv()).unwrap()
        };
        let step = 1e-6;
        let (mut best, mut best_val) = (0.0, f64::INFINITY);
        for i in 0..=1_500_000 {
            let a = -0.25 + i as f64 * step;
            let val = objective(a);
            if val < best_val {
                best = a;
                best_val = val;
            }
        }
        let (mut lo, mut hi) = (best - step, best + step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..60 {
            let a = hi - g * (hi - lo);
            let b = lo + g * (hi - lo);
            if objective(a) <= objective(b) {
                hi = b;
            } else {
                lo = a;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn admm_matches_scalar_oracle_on_level_one() {
        let mesh = build_square_mesh::<f64>(1, 1.5).unwrap();
        let mask = DirichletMask::boundary(&mesh);
        let free = mask.free_dofs();
        assert_eq!(free.len(), 1);
        let center = free[0];
        let u_prev = disk_datum(&mesh);
        let mut params = AdmmParams::new(1e-10);
        params.max_iter = 100_000;
        for tau in [0.01, 0.1, 1.0] {
            let (v, _) = implicit_step_admm(&mesh, &u_prev, tau, &params, &mask).unwrap();
            let oracle = brute_force_center(&mesh, &u_prev, tau, center);
            assert!((v.coeffs()[center] - oracle).abs() <= 1e-5, "tau={tau}: {} vs {oracle}", v.coeffs()[center]);
        }
    }

    #[test]
    fn admm_step_descends_from_data() {
        let mesh = build_square_mesh::<f64>(3, 1.5).unwrap();
        let mask = DirichletMask::boundary(&mesh);
        let mass = assemble_mass(&mesh, false);
        let cone = ExactSolution::cone();
        for u_prev in [disk_datum(&mesh), nodal_interpolate(&mesh, |x| cone.initial(&x))] {
            for tau in [0.01, 0.1] {
                let params = AdmmParams::for_mesh_size(mesh.mesh_size());
                let (v, _) = implicit_step_admm(&mesh, &u_prev, tau, &params, &mask).unwrap();
                let at_v = step_objective(&mesh, &mass, u_prev.coeffs(), v.coeffs(), tau, &tv()).unwrap();
                let at_prev = total_variation(&mesh, &u_prev).unwrap();
                assert!(at_v <= at_prev, "{at_v} > {at_prev}");
            }
        }
    }

    #[test]
    fn fixed_point_agrees_with_admm() {
        let mesh = build_square_mesh::<f64>(2, 1.5).unwrap();
        let mask = DirichletMask::boundary(&mesh);
        let mass = assemble_mass(&mesh, false);
        let tau = mesh.mesh_size() / 4.0;
        let u_prev = disk_datum(&mesh);
        let (admm, _) = implicit_step_admm(&mesh, &u_prev, tau, &AdmmParams::new(1e-10), &mask).unwrap();
        let density = Density::p_dirichlet(Regularization::Standard, 1.0, 1e-6).unwrap();
        let mut params = FixedPointParams::new(density, 1e-10);
        params.max_inner = 100_000;
        let (fp, stats) = implicit_step_fixedpoint(&mesh, &u_prev, tau, &params, &mask).unwrap();
        let diff: Vec<f64> = admm.coeffs().iter().zip(fp.coeffs()).map(|(a, b)| a - b).collect();
        let gap = m_norm_coeffs(&diff, &mass).unwrap();
        assert!(gap <= 1e-3, "gap {gap}, {} sweeps", stats.iterations);
    }

    #[test]
    fn fixed_point_objective_decreases() {
        let mesh = build_square_mesh::<f64>(3, 1.5).unwrap();
        let mask = DirichletMask::boundary(&mesh);
        for density in [
            Density::p_dirichlet(Regularization::Standard, 1.0, 0.01).unwrap(),
            Density::p_dirichlet(Regularization::Truncated, 1.5, 0.05).unwrap(),
        ] {
            let params = FixedPointParams::new(density, 1e-10);
            let (_, stats) = implicit_step_fixedpoint(&mesh, &disk_datum(&mesh), 0.05, &params, &mask).unwrap();
            for w in stats.objective.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs(), "{} > {}", w[1], w[0]);
            }
        }
    }

    #[test]
    fn fixed_point_keeps_constants() {
        let mesh = build_square_mesh::<f64>(2, 1.5).unwrap();
        let c = FeFunction::constant(&mesh, 0.4);
        let params = FixedPointParams::new(Density::total_variation(0.1).unwrap(), 1e-12);
        let (w, stats) = implicit_step_fixedpoint(&mesh, &c, 0.3, &params, &DirichletMask::none(&mesh)).unwrap();
        assert_eq!(stats.iterations, 1);
        assert!(w.coeffs().iter().all(|&v| (v - 0.4).abs() < 1e-13));
    }

    #[test]
    fn fixed_point_satisfies_variational_inequality() {
        let mesh = build_square_mesh::<f64>(2, 1.5).unwrap();
        let mask = DirichletMask::boundary(&mesh);
        let mass = assemble_mass(&mesh, false);
        let tau = 0.05;
        let density = Density::p_dirichlet(Regularization::Standard, 1.0, 0.01).unwrap();
        let u_prev = disk_datum(&mesh);
        let mut params = FixedPointParams::new(density, 1e-13);
        params.max_inner = 100_000;
        let (u, _) = implicit_step_fixedpoint(&mesh, &u_prev, tau, &params, &mask).unwrap();
        let e_u = energy_of_gradients(&mesh, &gradients_of(&mesh, u.coeffs()), &density);
        let d_t: Vec<f64> = u.coeffs().iter().zip(u_prev.coeffs()).map(|(a, b)| (a - b) / tau).collect();
        let m_dt = mass.mul_vec(&d_t).unwrap();
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..20 {
            let mut v: Vec<f64> = (0..mesh.n_vertices()).map(|_| rng.random_range(-1.0..1.5)).collect();
            mask.apply(&mut v);
            let lhs: f64 = -m_dt.iter().zip(&v).zip(u.coeffs()).map(|((m, vi), ui)| m * (vi - ui)).sum::<f64>() + e_u;
            let e_v = energy_of_gradients(&mesh, &gradients_of(&mesh, &v), &density);
            assert!(lhs <= e_v + 1e-8, "{lhs} > {e_v}");
        }
    }

    #[test]
    fn admm_run_has_monotone_total_variation() {
        let mesh = build_square_mesh::<f64>(3, 1.5).unwrap();
        let h = mesh.mesh_size();
        let cfg = ImplicitConfig {
            tau: h / 4.0,
            t_end: 0.6,
            scheme: ImplicitScheme::Admm(AdmmParams::for_mesh_size(h)),
            dirichlet: DirichletMask::boundary(&mesh),
            keep_trajectory: true,
        };
        let run = run_implicit(&mesh, &disk_datum(&mesh), &cfg).unwrap();
        assert_eq!(run.states.len(), run.n_steps + 1);
        let tvs: Vec<f64> = run.states.iter().map(|u| total_variation(&mesh, u).unwrap()).collect();
        for w in tvs.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{tvs:?}");
        }
        for info in &run.steps {
            let rho = info.rho.unwrap();
            assert!((RHO_MIN..=RHO_MAX).contains(&rho));
        }
    }

    #[test]
    fn zero_datum_gives_zero_trajectory() {
        let mesh = build_square_mesh::<f64>(2, 1.5).unwrap();
        for scheme in [
            ImplicitScheme::Admm(AdmmParams::new(1e-8)),
            ImplicitScheme::FixedPoint(FixedPointParams::new(Density::total_variation(0.1).unwrap(), 1e-10)),
        ] {
            let cfg = ImplicitConfig {
                tau: 0.25,
                t_end: 1.0,
                scheme,
                dirichlet: DirichletMask::boundary(&mesh),
                keep_trajectory: true,
            };
            let run = run_implicit(&mesh, &FeFunction::zeros(&mesh), &cfg).unwrap();
            assert_eq!(run.states.len(), 5);
            assert!(run.states.iter().all(|u| u.coeffs().iter().all(|&c| c == 0.0)));
        }
    }

    #[test]
    fn admm_reports_nonconvergence() {
        let mesh = build_square_mesh::<f64>(3, 1.5).unwrap();
        let mut params = AdmmParams::new(1e-14);
        params.max_iter = 3;
        let err =
            implicit_step_admm(&mesh, &disk_datum(&mesh), 0.1, &params, &DirichletMask::boundary(&mesh)).unwrap_err();
        match err {
            FlowError::AdmmNotConverged { iterations, primal, dual } => {
                assert_eq!(iterations, 3);
                assert!(primal.hypot(dual) > 1e-14);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parameter_validation() {
        let mut p = AdmmParams::<f64>::new(1e-6);
        assert!(p.validate().is_ok());
        p.rho0 = 1e9;
        assert!(p.validate().is_err());
        assert!(AdmmParams::<f64>::new(0.0).validate().is_err());
        let fp = FixedPointParams::new(tv(), 1e-8);
        assert!(fp.validate().is_err());
    }
}
