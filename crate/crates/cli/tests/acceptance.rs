//! Acceptance harness: one PASS/FAIL line per criterion, non-zero exit if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use flowlab::{check_stability, run_experiment, EpsMode, Example, ExperimentConfig, Scheme};
use flowlab_core::energy::{approx_mod_gap, fv_identity_gap, orlicz_gap};
use flowlab_core::exact::ExactSolution;
use flowlab_core::fem::{assemble_mass, element_gradients, nodal_interpolate};
use flowlab_core::implicit::{implicit_step_admm, step_objective, AdmmParams};
use flowlab_core::linsolve::{dense_solve, DenseMatrix};
use flowlab_core::semi_implicit::{run_semi_implicit_with, semi_implicit_step};
use flowlab_core::{build_square_mesh, Density, DirichletMask, FeFunction, FlowConfig, Mesh, Regularization};
use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

const HALF_WIDTH: f64 = 1.5;

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Outcome { passed, detail }
    }
}

fn within(value: f64, target: f64, rel: f64) -> bool {
    (value - target).abs() <= rel * target
}

fn semi(example: Example, level: usize, alpha: f64) -> ExperimentConfig {
    ExperimentConfig {
        example,
        scheme: Scheme::Semi,
        level,
        eps_mode: Some(EpsMode::Power(alpha)),
        ..Default::default()
    }
}

fn max_error(cfg: &ExperimentConfig) -> f64 {
    run_experiment(cfg).expect("experiment runs").max_error
}

fn tv(eps: f64) -> Density<f64> {
    Density::p_dirichlet(Regularization::Standard, 1.0, eps).unwrap()
}

fn disk_datum(mesh: &Mesh<f64>) -> FeFunction<f64> {
    let disk = ExactSolution::disk();
    nodal_interpolate(mesh, |x| disk.initial(&x))
}

fn timed(budget: Duration, body: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = body();
    let elapsed = start.elapsed();
    if elapsed > budget {
        out.passed = false;
    }
    out.detail = format!("{} [{:.1}s / {}s]", out.detail, elapsed.as_secs_f64(), budget.as_secs());
    out
}

fn stability() -> Outcome {
    timed(Duration::from_secs(10), || {
        let base = ExperimentConfig {
            level: 4,
            eps_mode: Some(EpsMode::Absolute(0.01)),
            ..Default::default()
        };
        let h = base.mesh_size();
        let checks = check_stability(&base, &[h / 4.0, 1.0, 10.0], 5, 1e-10).expect("stability runs");
        let passed = checks.iter().all(|c| c.min_relative_slack >= -1e-10 && c.energies_nonincreasing);
        let detail = checks
            .iter()
            .map(|c| format!("tau={:.4}: min rel slack {:.2e}, monotone {}", c.tau, c.min_relative_slack, c.energies_nonincreasing))
            .collect::<Vec<_>>()
            .join("; ");
        Outcome::new(passed, detail)
    })
}

fn disk_table() -> (Outcome, [f64; 3]) {
    let mut level5 = [0.0; 3];
    let out = timed(Duration::from_secs(60), || {
        let cases = [(4, 1.0, 0.1495), (5, 1.0, 0.1139), (5, 0.5, 0.2276), (5, 2.0, 0.1030)];
        let mut passed = true;
        let mut parts = Vec::new();
        for (level, alpha, target) in cases {
            let err = max_error(&semi(Example::Disk, level, alpha));
            if level == 5 {
                let slot = [0.5, 1.0, 2.0].iter().position(|&a| a == alpha).unwrap();
                level5[slot] = err;
            }
            let ok = within(err, target, 0.2);
            passed &= ok;
            parts.push(format!("l={level} eps=h^{alpha}: {err:.4} vs {target} {}", if ok { "ok" } else { "off" }));
        }
        Outcome::new(passed, parts.join("; "))
    });
    (out, level5)
}

fn cone_table() -> Outcome {
    timed(Duration::from_secs(120), || {
        let mut passed = true;
        let mut parts = Vec::new();
        for (alpha, target) in [(1.0, 0.1808), (2.0, 0.0956)] {
            let err = max_error(&semi(Example::Cone, 5, alpha));
            let ok = within(err, target, 0.2);
            passed &= ok;
            parts.push(format!("l=5 eps=h^{alpha}: {err:.4} vs {target} {}", if ok { "ok" } else { "off" }));
        }
        let sweep: Vec<f64> = (3..=7).map(|l| max_error(&semi(Example::Cone, l, 1.0))).collect();
        let monotone = sweep.windows(2).all(|w| w[1] < w[0]);
        passed &= monotone;
        let shown: Vec<String> = sweep.iter().map(|e| format!("{e:.4}")).collect();
        parts.push(format!("eps=h over l=3..7: {} (decreasing {monotone})", shown.join(" > ")));
        Outcome::new(passed, parts.join("; "))
    })
}

fn implicit_admm() -> Outcome {
    timed(Duration::from_secs(300), || {
        let cfg = ExperimentConfig { level: 4, scheme: Scheme::ImplicitAdmm, ..Default::default() };
        let series = run_experiment(&cfg).expect("implicit run");
        assert_eq!(series.metadata.delta_stop, Some(cfg.mesh_size().powi(5)));
        // Past extinction the exact interpolant is zero, so the error is ||u_h||_M.
        let k = series.times.iter().position(|&t| t >= 0.6).expect("run reaches t = 0.6");
        let late = series.l2_errors[k];
        let ok_max = within(series.max_error, 0.1999, 0.25);
        let ok_late = late <= 0.05;
        Outcome::new(
            ok_max && ok_late,
            format!(
                "max error {:.4} vs 0.1999 (+-25%); ||u_h||_M at t={:.3}: {late:.2e} <= 0.05",
                series.max_error, series.times[k]
            ),
        )
    })
}

fn ordering(level5: [f64; 3]) -> Outcome {
    let [sqrt_h, h, h2] = level5;
    Outcome::new(
        sqrt_h > h && h > h2,
        format!("l=5 disk: h^0.5 {sqrt_h:.4} > h {h:.4} > h^2 {h2:.4}"),
    )
}

/// Minimizes the step objective over the single interior coefficient of the
/// level-1 mesh: grid search with step 1e-6, then golden sections.
fn brute_force_center(mesh: &Mesh<f64>, u_prev: &FeFunction<f64>, tau: f64, center: usize) -> f64 {
    let mass = assemble_mass(mesh, false);
    let density = tv(0.0);
    let objective = |alpha: f64| {
        let mut v = vec![0.0; mesh.n_vertices()];
        v[center] = alpha;
        step_objective(mesh, &mass, u_prev.coeffs(), &v, tau, &density).unwrap()
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

/// Dense element-loop assembly of `(M + tau K_w) u = M u_prev` on the free dofs.
fn dense_semi_step(mesh: &Mesh<f64>, u_prev: &FeFunction<f64>, tau: f64, eps: f64, mask: &DirichletMask) -> Vec<f64> {
    let n = mesh.n_vertices();
    let grads = element_gradients(mesh, u_prev).unwrap();
    let mut a = vec![vec![0.0; n]; n];
    let mut m = vec![vec![0.0; n]; n];
    for (e, t) in mesh.elements().iter().enumerate() {
        let geo = &mesh.geometries()[e];
        let w = 1.0 / (grads[e][0].powi(2) + grads[e][1].powi(2) + eps * eps).sqrt();
        for i in 0..3 {
            for j in 0..3 {
                let mass = geo.area / 12.0 * if i == j { 2.0 } else { 1.0 };
                let gi = geo.grad_bary[i];
                let gj = geo.grad_bary[j];
                m[t[i]][t[j]] += mass;
                a[t[i]][t[j]] += mass + tau * w * geo.area * (gi[0] * gj[0] + gi[1] * gj[1]);
            }
        }
    }
    let free = mask.free_dofs();
    let rows: Vec<Vec<f64>> = free.iter().map(|&i| free.iter().map(|&j| a[i][j]).collect()).collect();
    let rhs: Vec<f64> = free
        .iter()
        .map(|&i| (0..n).map(|j| m[i][j] * u_prev.coeffs()[j]).sum())
        .collect();
    let x = dense_solve(&DenseMatrix::from_rows(&rows).unwrap(), &rhs).unwrap();
    let mut out = vec![0.0; n];
    for (k, &i) in free.iter().enumerate() {
        out[i] = x[k];
    }
    out
}

fn oracles() -> Outcome {
    let mut parts = Vec::new();
    let mut passed = true;

    let mesh = build_square_mesh::<f64>(1, HALF_WIDTH).unwrap();
    let mask = DirichletMask::boundary(&mesh);
    let center = mask.free_dofs()[0];
    let u_prev = disk_datum(&mesh);
    let mut params = AdmmParams::new(1e-10);
    params.max_iter = 100_000;
    let mut worst_admm: f64 = 0.0;
    for tau in [0.01, 0.1, 1.0] {
        let (v, _) = implicit_step_admm(&mesh, &u_prev, tau, &params, &mask).unwrap();
        let oracle = brute_force_center(&mesh, &u_prev, tau, center);
        worst_admm = worst_admm.max((v.coeffs()[center] - oracle).abs());
    }
    passed &= worst_admm <= 1e-5;
    parts.push(format!("ADMM vs brute force {worst_admm:.2e} <= 1e-5"));

    let mut worst_semi: f64 = 0.0;
    for (level, tau, eps) in [(1, 1.0, 1.0), (1, 0.1, 0.01), (2, 0.1, 0.05), (2, 10.0, 0.01)] {
        let mesh = build_square_mesh::<f64>(level, HALF_WIDTH).unwrap();
        let mask = DirichletMask::boundary(&mesh);
        let u0 = disk_datum(&mesh);
        let cfg = FlowConfig::new(tv(eps), tau, 10.0, mask.clone());
        let step = semi_implicit_step(&mesh, &u0, &cfg).unwrap();
        let dense = dense_semi_step(&mesh, &u0, tau, eps, &mask);
        for (a, b) in step.coeffs().iter().zip(&dense) {
            worst_semi = worst_semi.max((a - b).abs());
        }
    }
    passed &= worst_semi <= 1e-10;
    parts.push(format!("semi-implicit vs dense solve {worst_semi:.2e} <= 1e-10"));
    Outcome::new(passed, parts.join("; "))
}

fn all_densities() -> Vec<Density<f64>> {
    let mut out = vec![Density::prandtl_eyring()];
    for p in [1.0, 1.25, 1.5, 1.9] {
        for eps in [1e-3, 0.1, 1.0] {
            for reg in [Regularization::Standard, Regularization::Truncated] {
                out.push(Density::p_dirichlet(reg, p, eps).unwrap());
            }
        }
    }
    out
}

fn pointwise_inequalities() -> Outcome {
    timed(Duration::from_secs(5), || {
        let mut rng = StdRng::seed_from_u64(2024);
        let mut normal = move || -> [f64; 2] { [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)] };

        let mut worst_gap = f64::INFINITY;
        for d in all_densities() {
            for _ in 0..10_000 {
                let (a, b) = (normal(), normal());
                worst_gap = worst_gap.min(orlicz_gap(a, b, &d).unwrap());
            }
        }

        let mut worst_fv: f64 = 0.0;
        for eps in [1e-3, 0.1, 1.0] {
            for _ in 0..10_000 {
                let (a, b) = (normal(), normal());
                let la = a[0].hypot(a[1]).hypot(eps);
                let lb = b[0].hypot(b[1]).hypot(eps);
                // Rounding scale of the left side: sum of |a_i/|a|_e| + |b_i/|b|_e| times |a_i - b_i|.
                let scale: f64 = (0..2).map(|i| (a[i].abs() / la + b[i].abs() / lb) * (a[i] - b[i]).abs()).sum();
                let rel = fv_identity_gap(a, b, eps).abs() / scale.max(f64::MIN_POSITIVE);
                worst_fv = worst_fv.max(rel);
            }
        }

        let (mut worst_std, mut worst_trunc) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in [1.0, 1.25, 1.5, 1.9] {
            for eps in [1e-3, 0.1, 1.0] {
                for k in 0..=2000 {
                    let a = [20.0 * eps * k as f64 / 2000.0, 0.0];
                    worst_std = worst_std.max(approx_mod_gap(a, eps, p, Regularization::Standard));
                    let bound = (2.0 - p) / 2.0;
                    worst_trunc = worst_trunc.max(approx_mod_gap(a, eps, p, Regularization::Truncated) - bound);
                }
            }
        }

        let passed = worst_gap >= -1e-12 && worst_fv <= 1e-10 && worst_std <= 1.0 && worst_trunc <= 1e-12;
        Outcome::new(
            passed,
            format!(
                "min orlicz gap {worst_gap:.2e}; max rel identity gap {worst_fv:.2e}; approx-mod standard {worst_std:.4} <= 1, truncated excess {worst_trunc:.2e}"
            ),
        )
    })
}

fn conservation() -> Outcome {
    let mesh = build_square_mesh::<f64>(4, HALF_WIDTH).unwrap();
    let mass = assemble_mass(&mesh, false);
    let u0 = disk_datum(&mesh);
    let mean0 = u0.mean(&mass).unwrap();
    let neumann = FlowConfig::new(tv(0.05), 0.02, 1.0, DirichletMask::none(&mesh));
    let mut drift: f64 = 0.0;
    let mut steps = 0;
    run_semi_implicit_with(&mesh, &u0, &neumann, |k, _, u| {
        steps = k;
        drift = drift.max((u.mean(&mass).unwrap() - mean0).abs());
    })
    .unwrap();

    let perm = mesh.diagonal_reflection_permutation().unwrap();
    let dirichlet = FlowConfig::new(tv(0.05), mesh.mesh_size() / 4.0, 1.0, DirichletMask::boundary(&mesh));
    let mut asym: f64 = 0.0;
    run_semi_implicit_with(&mesh, &u0, &dirichlet, |_, _, u| {
        let c = u.coeffs();
        for (i, &j) in perm.iter().enumerate() {
            asym = asym.max((c[i] - c[j]).abs());
        }
    })
    .unwrap();

    Outcome::new(
        steps >= 50 && drift <= 1e-8 && asym <= 1e-9,
        format!("Neumann mean drift {drift:.2e} over {steps} steps; reflection asymmetry {asym:.2e}"),
    )
}

fn exact_solutions() -> Outcome {
    let checks = flowlab::verify::verify_exact(1e-3, 1e-4);
    let worst = checks.iter().map(|c| c.max_discrepancy).fold(0.0, f64::max);
    let regions_ok = checks.iter().all(|c| c.passed);

    let mut max_flux: f64 = 0.0;
    for sol in [ExactSolution::disk(), ExactSolution::cone()] {
        for t in [0.0, 0.01, 0.05, 0.1, 0.18, 0.3, 0.45, 0.6] {
            for i in 0..=120 {
                for j in 0..=120 {
                    let x = [-1.5 + 3.0 * i as f64 / 120.0, -1.5 + 3.0 * j as f64 / 120.0];
                    let p = sol.flux(t, &x);
                    max_flux = max_flux.max(p[0].hypot(p[1]));
                }
            }
        }
    }
    let extinction: f64 = ExactSolution::cone().extinction_time();
    let passed = regions_ok && max_flux <= 1.0 + 1e-12 && extinction == 3.0 / 16.0;
    Outcome::new(
        passed,
        format!(
            "{} regions, worst discrepancy {worst:.2e}; max |flux| {max_flux:.15}; cone extinction {extinction}",
            checks.len()
        ),
    )
}

fn main() -> ExitCode {
    let (table, level5) = disk_table();
    let results = [
        ("1 unconditional stability", stability()),
        ("2 disk table", table),
        ("3 cone table", cone_table()),
        ("4 implicit ADMM", implicit_admm()),
        ("5 ordering in eps", ordering(level5)),
        ("6 oracle equivalence", oracles()),
        ("7 pointwise inequalities", pointwise_inequalities()),
        ("8 structural conservation", conservation()),
        ("9 exact solutions", exact_solutions()),
    ];
    let mut failed = 0;
    for (name, out) in &results {
        println!("{} criterion {name}: {}", if out.passed { "PASS" } else { "FAIL" }, out.detail);
        failed += usize::from(!out.passed);
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
