use crate::error::{FlowError, Result};
use crate::scalar::{dot_slices, norm_slice, Real};

use super::sparse::SparseMatrix;

#[derive(Debug, Clone, Copy)]
pub struct CgOptions<T> {
    /// Relative residual target `||b - Ax|| <= tol ||b||`. A residual at the
    /// rounding floor `64 eps (||A|| ||x|| + ||b||)` is accepted as well, with
    /// the maximum absolute row sum as `||A||`.
    pub tol: T,
    /// Iteration cap; `None` means `10 n`.
    pub max_iter: Option<usize>,
    pub jacobi: bool,
}

impl<T: Real> Default for CgOptions<T> {
    fn default() -> Self {
        CgOptions { tol: T::lit(1e-10), max_iter: None, jacobi: true }
    }
}

impl<T: Real> CgOptions<T> {
    pub fn with_tol(tol: T) -> Self {
        CgOptions { tol, ..Self::default() }
    }
}

#[derive(Debug, Clone)]
pub struct CgSolution<T> {
    pub x: Vec<T>,
    pub iterations: usize,
    /// Relative residual of the returned iterate, recomputed from scratch.
    pub relative_residual: T,
}

/// Conjugate gradients from a zero initial guess.
pub fn cg_solve<T: Real>(a: &SparseMatrix<T>, b: &[T], opts: &CgOptions<T>) -> Result<CgSolution<T>> {
    cg_solve_from(a, b, vec![T::zero(); b.len()], opts, |_, _| {})
}

/// Conjugate gradients from `x0`. `monitor` sees the iteration count and the
/// current iterate after every update.
pub fn cg_solve_from<T: Real, F: FnMut(usize, &[T])>(
    a: &SparseMatrix<T>,
    b: &[T],
    x0: Vec<T>,
    opts: &CgOptions<T>,
    mut monitor: F,
) -> Result<CgSolution<T>> {
    let n = a.n();
    if b.len() != n {
        return Err(FlowError::DimensionMismatch { expected: n, got: b.len() });
    }
    if x0.len() != n {
        return Err(FlowError::DimensionMismatch { expected: n, got: x0.len() });
    }
    if !(opts.tol > T::zero()) {
        return Err(FlowError::InvalidParameter(format!("CG tolerance must be positive, got {}", opts.tol)));
    }
    let max_iter = opts.max_iter.unwrap_or(10 * n.max(1));
    let b_norm = norm_slice(b);
    if b_norm == T::zero() {
        return Ok(CgSolution { x: vec![T::zero(); n], iterations: 0, relative_residual: T::zero() });
    }
    let inv_diag: Vec<T> = if opts.jacobi {
        a.diagonal()
            .into_iter()
            .map(|d| if d > T::zero() { T::one() / d } else { T::one() })
            .collect()
    } else {
        vec![T::one(); n]
    };
    let a_norm = a.norm_inf();
    let floor = T::lit(64.0) * T::epsilon();
    let target = |x: &[T]| (opts.tol * b_norm).max(floor * (a_norm * norm_slice(x) + b_norm));

    let mut x = x0;
    let mut r = vec![T::zero(); n];
    let mut z = vec![T::zero(); n];
    let mut p = vec![T::zero(); n];
    let mut ap = vec![T::zero(); n];
    let mut iterations = 0;

    let true_residual = |x: &[T], r: &mut [T]| {
        a.mul_into(x, r);
        for (ri, &bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        norm_slice(r)
    };

    // Outer loop restarts from the true residual when the recursive one drifts.
    for _restart in 0..4 {
        let mut res = true_residual(&x, &mut r);
        if res <= target(&x) {
            return Ok(CgSolution { x, iterations, relative_residual: res / b_norm });
        }
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot_slices(&r, &z);
        while iterations < max_iter {
            a.mul_into(&p, &mut ap);
            let pap = dot_slices(&p, &ap);
            if !(pap > T::zero()) {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            iterations += 1;
            monitor(iterations, &x);
            res = norm_slice(&r);
            if res <= target(&x) {
                break;
            }
            for i in 0..n {
                z[i] = inv_diag[i] * r[i];
            }
            let rz_new = dot_slices(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        let res = true_residual(&x, &mut r);
        if res <= target(&x) {
            return Ok(CgSolution { x, iterations, relative_residual: res / b_norm });
        }
        if iterations >= max_iter {
            return Err(FlowError::CgNotConverged { iterations, residual: (res / b_norm).as_f64() });
        }
    }
    let res = true_residual(&x, &mut r);
    Err(FlowError::CgNotConverged { iterations, residual: (res / b_norm).as_f64() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linsolve::dense::{dense_solve, DenseMatrix};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, seed: u64) -> DenseMatrix<f64> {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let mut g = a.gram();
        for i in 0..n {
            g[(i, i)] += 1.0;
        }
        g
    }

    fn to_sparse(d: &DenseMatrix<f64>) -> SparseMatrix<f64> {
        let n = d.n_rows();
        let trip: Vec<_> = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).map(|(i, j)| (i, j, d[(i, j)])).collect();
        SparseMatrix::from_triplets(n, &trip).unwrap()
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = SparseMatrix::<f64>::identity(5);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let sol = cg_solve(&a, &b, &CgOptions { jacobi: false, ..Default::default() }).unwrap();
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.x, b);
    }

    #[test]
    fn two_by_two() {
        let a = SparseMatrix::from_triplets(2, &[(0, 0, 4.0f64), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]).unwrap();
        let sol = cg_solve(&a, &[1.0, 2.0], &CgOptions::with_tol(1e-14)).unwrap();
        assert!((sol.x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((sol.x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn random_spd_matches_dense() {
        for seed in 0..3 {
            let d = random_spd(50, seed);
            let a = to_sparse(&d);
            let b: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
            let expected = dense_solve(&d, &b).unwrap();
            for jacobi in [false, true] {
                let sol = cg_solve(&a, &b, &CgOptions { tol: 1e-13, max_iter: None, jacobi }).unwrap();
                for (x, y) in sol.x.iter().zip(&expected) {
                    assert!((x - y).abs() < 1e-9, "{x} vs {y}");
                }
            }
        }
    }

    #[test]
    fn error_in_energy_norm_is_monotone() {
        let d = random_spd(40, 7);
        let a = to_sparse(&d);
        let b: Vec<f64> = (0..40).map(|i| 1.0 + i as f64).collect();
        let exact = dense_solve(&d, &b).unwrap();
        let mut errors = Vec::new();
        let energy = |x: &[f64]| {
            let e: Vec<f64> = x.iter().zip(&exact).map(|(a, b)| a - b).collect();
            a.quadratic_form(&e).unwrap().sqrt()
        };
        errors.push(energy(&vec![0.0; 40]));
        cg_solve_from(&a, &b, vec![0.0; 40], &CgOptions { tol: 1e-12, max_iter: None, jacobi: false }, |_, x| {
            errors.push(energy(x))
        })
        .unwrap();
        for w in errors.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let d = random_spd(30, 3);
        let a = to_sparse(&d);
        let b = vec![1.0; 30];
        let err = cg_solve(&a, &b, &CgOptions { tol: 1e-14, max_iter: Some(2), jacobi: false }).unwrap_err();
        match err {
            FlowError::CgNotConverged { iterations, residual } => {
                assert_eq!(iterations, 2);
                assert!(residual > 1e-14);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_rhs_and_bad_input() {
        let a = SparseMatrix::<f64>::identity(3);
        assert_eq!(cg_solve(&a, &[0.0; 3], &CgOptions::default()).unwrap().x, vec![0.0; 3]);
        assert!(cg_solve(&a, &[0.0; 2], &CgOptions::default()).is_err());
        assert!(cg_solve(&a, &[1.0; 3], &CgOptions::with_tol(0.0)).is_err());
    }

    #[test]
    fn single_precision() {
        let a = SparseMatrix::from_triplets(2, &[(0, 0, 4.0f32), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 3.0)]).unwrap();
        let sol = cg_solve(&a, &[1.0, 2.0], &CgOptions::with_tol(1e-6)).unwrap();
        assert!((sol.x[1] - 7.0 / 11.0).abs() < 1e-6);
    }
}
