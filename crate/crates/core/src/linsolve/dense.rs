use std::ops::{Index, IndexMut};

use crate::error::{FlowError, Result};
use crate::scalar::Real;

/// Row-major dense matrix; used as a reference solver in tests and small problems.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    n_rows: usize,
    n_cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        DenseMatrix { n_rows, n_cols, data: vec![T::zero(); n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(FlowError::DimensionMismatch { expected: n_cols, got: r.len() });
        }
        Ok(DenseMatrix { n_rows, n_cols, data: rows.concat() })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.n_cols.max(1)).map(<[T]>::to_vec).collect()
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        self.data
            .chunks(self.n_cols)
            .map(|row| row.iter().zip(x).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    /// `A^T A`.
    pub fn gram(&self) -> Self {
        let mut g = Self::zeros(self.n_cols, self.n_cols);
        for i in 0..self.n_cols {
            for j in 0..self.n_cols {
                g[(i, j)] = (0..self.n_rows).map(|k| self[(k, i)] * self[(k, j)]).sum();
            }
        }
        g
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n_cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n_cols + j]
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve<T: Real>(a: &DenseMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(FlowError::DimensionMismatch { expected: n, got: a.n_cols() });
    }
    if b.len() != n {
        return Err(FlowError::DimensionMismatch { expected: n, got: b.len() });
    }
    let mut m = a.clone();
    let mut x = b.to_vec();
    let scale = m.data.iter().fold(T::zero(), |s, v| s.max(v.abs()));
    let threshold = T::epsilon() * T::from_usize_lossy(n.max(1)) * scale;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[(i, col)].abs().partial_cmp(&m[(j, col)].abs()).unwrap())
            .unwrap();
        if !(m[(pivot, col)].abs() > threshold) {
            return Err(FlowError::SingularMatrix { column: col });
        }
        if pivot != col {
            for j in 0..n {
                m.data.swap(pivot * n + j, col * n + j);
            }
            x.swap(pivot, col);
        }
        let diag = m[(col, col)];
        for i in col + 1..n {
            let factor = m[(i, col)] / diag;
            if factor == T::zero() {
                continue;
            }
            for j in col..n {
                let v = m[(col, j)];
                m[(i, j)] -= factor * v;
            }
            let xc = x[col];
            x[i] -= factor * xc;
        }
    }
    for i in (0..n).rev() {
        let s: T = (i + 1..n).map(|j| m[(i, j)] * x[j]).sum();
        x[i] = (x[i] - s) / m[(i, i)];
    }
    Ok(x)
}
