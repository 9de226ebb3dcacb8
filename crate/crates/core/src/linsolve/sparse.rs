use crate::error::{FlowError, Result};
use crate::scalar::Real;

use super::dense::DenseMatrix;

/// Square matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix<T> {
    n: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> SparseMatrix<T> {
    /// Builds the matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut sorted: Vec<(usize, usize, T)> = triplets.to_vec();
        if let Some(&(i, j, _)) = sorted.iter().find(|(i, j, _)| *i >= n || *j >= n) {
            return Err(FlowError::DimensionMismatch { expected: n, got: i.max(j) + 1 });
        }
        sorted.sort_by_key(|a| (a.0, a.1));
        let mut row_offsets = vec![0; n + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<T> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_offsets[i + 1] += row_offsets[i];
        }
        Ok(SparseMatrix { n, row_offsets, col_indices, values })
    }

    /// Zero-valued matrix on a prescribed sparsity pattern. Column indices
    /// within each row must be strictly increasing.
    pub fn zeros_with_pattern(row_offsets: Vec<usize>, col_indices: Vec<usize>) -> Self {
        let n = row_offsets.len() - 1;
        debug_assert_eq!(row_offsets[n], col_indices.len());
        let values = vec![T::zero(); col_indices.len()];
        SparseMatrix { n, row_offsets, col_indices, values }
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![T::one(); n],
        }
    }

    pub fn from_diagonal(diag: &[T]) -> Self {
        let mut m = Self::identity(diag.len());
        m.values.copy_from_slice(diag);
        m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    /// Position of entry `(i, j)` in the value array, if it is stored.
    pub fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()].binary_search(&j).ok().map(|k| range.start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |k| self.values[k])
    }

    /// `y = A x`.
    pub fn mul_into(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = T::zero();
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                s += self.values[k] * x[self.col_indices[k]];
            }
            *yi = s;
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.n {
            return Err(FlowError::DimensionMismatch { expected: self.n, got: x.len() });
        }
        let mut y = vec![T::zero(); self.n];
        self.mul_into(x, &mut y);
        Ok(y)
    }

    /// `x^T A x`.
    pub fn quadratic_form(&self, x: &[T]) -> Result<T> {
        let ax = self.mul_vec(x)?;
        Ok(x.iter().zip(&ax).map(|(&a, &b)| a * b).sum())
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> T {
        (0..self.n).map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<T>()).fold(T::zero(), T::max)
    }

    pub fn same_pattern(&self, other: &Self) -> bool {
        self.n == other.n && self.row_offsets == other.row_offsets && self.col_indices == other.col_indices
    }

    /// `self + s * other`. Patterns may differ.
    pub fn add_scaled(&self, s: T, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(FlowError::DimensionMismatch { expected: self.n, got: other.n });
        }
        if self.same_pattern(other) {
            let mut out = self.clone();
            for (a, &b) in out.values.iter_mut().zip(&other.values) {
                *a += s * b;
            }
            return Ok(out);
        }
        let mut triplets = Vec::with_capacity(self.nnz() + other.nnz());
        for i in 0..self.n {
            triplets.extend(self.row(i).map(|(j, v)| (i, j, v)));
            triplets.extend(other.row(i).map(|(j, v)| (i, j, s * v)));
        }
        Self::from_triplets(self.n, &triplets)
    }

    /// Overwrites the values with `a * x + b * y` where all three share one pattern.
    pub fn assign_combination(&mut self, a: T, x: &Self, b: T, y: &Self) -> Result<()> {
        if !(self.same_pattern(x) && self.same_pattern(y)) {
            return Err(FlowError::InvalidParameter("sparsity patterns differ".into()));
        }
        for ((v, &xv), &yv) in self.values.iter_mut().zip(&x.values).zip(&y.values) {
            *v = a * xv + b * yv;
        }
        Ok(())
    }

    /// Largest entrywise asymmetry `|a_ij - a_ji|`.
    pub fn asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Rows and columns listed in `keep`, renumbered consecutively.
    pub fn principal_submatrix(&self, keep: &[usize]) -> Self {
        let mut new_index = vec![usize::MAX; self.n];
        for (k, &i) in keep.iter().enumerate() {
            new_index[i] = k;
        }
        let mut row_offsets = Vec::with_capacity(keep.len() + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for &i in keep {
            for (j, v) in self.row(i) {
                if new_index[j] != usize::MAX {
                    col_indices.push(new_index[j]);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        SparseMatrix { n: keep.len(), row_offsets, col_indices, values }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }
}
