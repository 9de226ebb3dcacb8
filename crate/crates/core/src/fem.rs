//! P1 finite element spaces on [`Mesh`]: nodal functions, Dirichlet masks,
//! mass and weighted stiffness assembly, interpolation, norms and errors.

use std::collections::BTreeSet;

use crate::error::{FlowError, Result};
use crate::linsolve::SparseMatrix;
use crate::mesh::{Mesh, MeshId};
use crate::scalar::{dot, norm, Real, Vec2};

/// Nodal coefficient vector of a continuous piecewise affine function.
#[derive(Debug, Clone, PartialEq)]
pub struct FeFunction<T> {
    mesh_id: MeshId,
    coeffs: Vec<T>,
}

impl<T: Real> FeFunction<T> {
    pub fn new(mesh: &Mesh<T>, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != mesh.n_vertices() {
            return Err(FlowError::DimensionMismatch { expected: mesh.n_vertices(), got: coeffs.len() });
        }
        Ok(FeFunction { mesh_id: mesh.id(), coeffs })
    }

    pub fn zeros(mesh: &Mesh<T>) -> Self {
        Self::constant(mesh, T::zero())
    }

    pub fn constant(mesh: &Mesh<T>, c: T) -> Self {
        FeFunction { mesh_id: mesh.id(), coeffs: vec![c; mesh.n_vertices()] }
    }

    pub fn mesh_id(&self) -> MeshId {
        self.mesh_id
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    /// Same mesh, new coefficients.
    pub fn with_coeffs(&self, coeffs: Vec<T>) -> Result<Self> {
        if coeffs.len() != self.coeffs.len() {
            return Err(FlowError::DimensionMismatch { expected: self.coeffs.len(), got: coeffs.len() });
        }
        Ok(FeFunction { mesh_id: self.mesh_id, coeffs })
    }

    pub fn belongs_to(&self, mesh: &Mesh<T>) -> Result<()> {
        if self.mesh_id != mesh.id() {
            return Err(FlowError::MeshMismatch);
        }
        Ok(())
    }

    /// Mean value `(u, 1) / |Omega|` for a mass matrix `m`.
    pub fn mean(&self, m: &SparseMatrix<T>) -> Result<T> {
        let mu = m.mul_vec(&self.coeffs)?;
        let area: T = m.row_sums().into_iter().sum();
        Ok(mu.into_iter().sum::<T>() / area)
    }
}

/// Vertices on which homogeneous Dirichlet values are imposed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirichletMask {
    constrained: Vec<bool>,
}

impl DirichletMask {
    /// Pure Neumann: nothing constrained.
    pub fn none<T: Real>(mesh: &Mesh<T>) -> Self {
        DirichletMask { constrained: vec![false; mesh.n_vertices()] }
    }

    /// Every boundary vertex constrained.
    pub fn boundary<T: Real>(mesh: &Mesh<T>) -> Self {
        DirichletMask { constrained: mesh.boundary_flags().to_vec() }
    }

    pub fn from_flags<T: Real>(mesh: &Mesh<T>, constrained: Vec<bool>) -> Result<Self> {
        if constrained.len() != mesh.n_vertices() {
            return Err(FlowError::DimensionMismatch { expected: mesh.n_vertices(), got: constrained.len() });
        }
        if let Some(i) = constrained.iter().zip(mesh.boundary_flags()).position(|(&c, &b)| c && !b) {
            return Err(FlowError::InvalidParameter(format!("constrained vertex {i} is not on the boundary")));
        }
        Ok(DirichletMask { constrained })
    }

    pub fn is_constrained(&self, i: usize) -> bool {
        self.constrained[i]
    }

    pub fn flags(&self) -> &[bool] {
        &self.constrained
    }

    pub fn len(&self) -> usize {
        self.constrained.len()
    }

    pub fn is_empty(&self) -> bool {
        !self.constrained.iter().any(|&c| c)
    }

    /// Indices of unconstrained vertices in increasing order.
    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.constrained.len()).filter(|&i| !self.constrained[i]).collect()
    }

    /// Zeroes the constrained coefficients.
    pub fn apply<T: Real>(&self, coeffs: &mut [T]) {
        for (c, &fixed) in coeffs.iter_mut().zip(&self.constrained) {
            if fixed {
                *c = T::zero();
            }
        }
    }

    pub fn satisfied_by<T: Real>(&self, coeffs: &[T]) -> bool {
        coeffs.iter().zip(&self.constrained).all(|(&c, &fixed)| !fixed || c == T::zero())
    }

    /// Imposes homogeneous values on a symmetric system in place: constrained
    /// rows and columns become unit rows, their right-hand sides zero.
    pub fn eliminate<T: Real>(&self, a: &mut SparseMatrix<T>, rhs: &mut [T]) -> Result<()> {
        if a.n() != self.constrained.len() {
            return Err(FlowError::DimensionMismatch { expected: self.constrained.len(), got: a.n() });
        }
        if rhs.len() != self.constrained.len() {
            return Err(FlowError::DimensionMismatch { expected: self.constrained.len(), got: rhs.len() });
        }
        let offsets = a.row_offsets().to_vec();
        let cols = a.col_indices().to_vec();
        let values = a.values_mut();
        for i in 0..offsets.len() - 1 {
            let row_fixed = self.constrained[i];
            for s in offsets[i]..offsets[i + 1] {
                let j = cols[s];
                if row_fixed || self.constrained[j] {
                    values[s] = if i == j { T::one() } else { T::zero() };
                }
            }
            if row_fixed {
                rhs[i] = T::zero();
            }
        }
        Ok(())
    }
}

/// Vertex-adjacency sparsity pattern with a per-element map into the value array.
#[derive(Debug, Clone)]
pub struct P1Assembler<'m, T> {
    mesh: &'m Mesh<T>,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    slots: Vec<[[usize; 3]; 3]>,
}

impl<'m, T: Real> P1Assembler<'m, T> {
    pub fn new(mesh: &'m Mesh<T>) -> Self {
        let n = mesh.n_vertices();
        let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
        for t in mesh.elements() {
            for &a in t {
                adjacency[a].extend(t.iter().copied());
            }
        }
        let mut row_offsets = Vec::with_capacity(n + 1);
        row_offsets.push(0);
        let mut col_indices = Vec::new();
        for row in &adjacency {
            col_indices.extend(row.iter().copied());
            row_offsets.push(col_indices.len());
        }
        let slot = |i: usize, j: usize| {
            let range = row_offsets[i]..row_offsets[i + 1];
            range.start + col_indices[range].binary_search(&j).expect("pattern contains element couplings")
        };
        let slots = mesh
            .elements()
            .iter()
            .map(|t| {
                let mut s = [[0; 3]; 3];
                for a in 0..3 {
                    for b in 0..3 {
                        s[a][b] = slot(t[a], t[b]);
                    }
                }
                s
            })
            .collect();
        P1Assembler { mesh, row_offsets, col_indices, slots }
    }

    pub fn mesh(&self) -> &'m Mesh<T> {
        self.mesh
    }

    /// Zero matrix carrying the shared pattern.
    pub fn zero_matrix(&self) -> SparseMatrix<T> {
        SparseMatrix::zeros_with_pattern(self.row_offsets.clone(), self.col_indices.clone())
    }

    /// Consistent mass matrix, or its row-sum lumping (stored on the same pattern).
    pub fn mass(&self, lumped: bool) -> SparseMatrix<T> {
        let mut m = self.zero_matrix();
        let twelfth = T::lit(1.0 / 12.0);
        let values = m.values_mut();
        for (g, s) in self.mesh.geometries().iter().zip(&self.slots) {
            let off = g.area * twelfth;
            for a in 0..3 {
                if lumped {
                    values[s[a][a]] += T::lit(4.0) * off;
                } else {
                    for b in 0..3 {
                        values[s[a][b]] += if a == b { off + off } else { off };
                    }
                }
            }
        }
        m
    }

    /// Overwrites `out` (which must carry this pattern) with
    /// `sum_T w_T |T| grad_i . grad_j`.
    pub fn weighted_stiffness_into(&self, weights: &[T], out: &mut SparseMatrix<T>) -> Result<()> {
        if weights.len() != self.mesh.n_elements() {
            return Err(FlowError::DimensionMismatch { expected: self.mesh.n_elements(), got: weights.len() });
        }
        if let Some((e, &w)) = weights.iter().enumerate().find(|(_, &w)| !(w > T::zero() && w.is_finite())) {
            return Err(FlowError::NonPositiveWeight { element: e, value: w.as_f64() });
        }
        if out.row_offsets() != self.row_offsets.as_slice() || out.col_indices() != self.col_indices.as_slice() {
            return Err(FlowError::InvalidParameter("target matrix does not carry the mesh pattern".into()));
        }
        let values = out.values_mut();
        values.iter_mut().for_each(|v| *v = T::zero());
        for ((g, s), &w) in self.mesh.geometries().iter().zip(&self.slots).zip(weights) {
            let scale = w * g.area;
            for a in 0..3 {
                for b in 0..3 {
                    values[s[a][b]] += scale * dot(g.grad_bary[a], g.grad_bary[b]);
                }
            }
        }
        Ok(())
    }

    pub fn weighted_stiffness(&self, weights: &[T]) -> Result<SparseMatrix<T>> {
        let mut k = self.zero_matrix();
        self.weighted_stiffness_into(weights, &mut k)?;
        Ok(k)
    }
}

pub fn assemble_mass<T: Real>(mesh: &Mesh<T>, lumped: bool) -> SparseMatrix<T> {
    P1Assembler::new(mesh).mass(lumped)
}

pub fn assemble_weighted_stiffness<T: Real>(mesh: &Mesh<T>, weights: &[T]) -> Result<SparseMatrix<T>> {
    P1Assembler::new(mesh).weighted_stiffness(weights)
}

/// Element-wise constant gradients of the P1 function with the given coefficients.
pub fn gradients_of<T: Real>(mesh: &Mesh<T>, coeffs: &[T]) -> Vec<Vec2<T>> {
    mesh.elements()
        .iter()
        .zip(mesh.geometries())
        .map(|(t, g)| {
            let mut grad = [T::zero(); 2];
            for a in 0..3 {
                let c = coeffs[t[a]];
                grad[0] += c * g.grad_bary[a][0];
                grad[1] += c * g.grad_bary[a][1];
            }
            grad
        })
        .collect()
}

pub fn element_gradients<T: Real>(mesh: &Mesh<T>, u: &FeFunction<T>) -> Result<Vec<Vec2<T>>> {
    u.belongs_to(mesh)?;
    Ok(gradients_of(mesh, u.coeffs()))
}

/// Transpose of the area-weighted gradient map: `sum_T |T| q_T . grad phi_i`.
pub fn weighted_gradient_transpose<T: Real>(mesh: &Mesh<T>, q: &[Vec2<T>]) -> Vec<T> {
    let mut out = vec![T::zero(); mesh.n_vertices()];
    for ((t, g), qt) in mesh.elements().iter().zip(mesh.geometries()).zip(q) {
        for a in 0..3 {
            out[t[a]] += g.area * dot(*qt, g.grad_bary[a]);
        }
    }
    out
}

pub fn nodal_interpolate<T: Real, F: Fn(Vec2<T>) -> T>(mesh: &Mesh<T>, f: F) -> FeFunction<T> {
    FeFunction { mesh_id: mesh.id(), coeffs: mesh.vertices().iter().map(|&p| f(p)).collect() }
}

/// Barycentric coordinates of the edge midpoints of every sub-triangle in the
/// uniform `4^subdiv` subdivision of the reference triangle.
fn midpoint_rule_nodes<T: Real>(subdiv: u32) -> Vec<[T; 3]> {
    let n = 1usize << subdiv;
    let inv = T::one() / T::from_usize_lossy(n);
    let bary = |i: usize, j: usize| -> [T; 3] {
        let (x, y) = (T::from_usize_lossy(i) * inv, T::from_usize_lossy(j) * inv);
        [T::one() - x - y, x, y]
    };
    let half = T::lit(0.5);
    let mid = |p: [T; 3], q: [T; 3]| [0, 1, 2].map(|k| (p[k] + q[k]) * half);
    let mut nodes = Vec::with_capacity(3 * n * n);
    for j in 0..n {
        for i in 0..n - j {
            let tris = if i + j + 1 < n {
                vec![
                    [bary(i, j), bary(i + 1, j), bary(i, j + 1)],
                    [bary(i + 1, j), bary(i + 1, j + 1), bary(i, j + 1)],
                ]
            } else {
                vec![[bary(i, j), bary(i + 1, j), bary(i, j + 1)]]
            };
            for [p, q, r] in tris {
                nodes.extend([mid(p, q), mid(q, r), mid(r, p)]);
            }
        }
    }
    nodes
}

/// `L^2` distance between `u` and `f`, integrated with the edge-midpoint rule
/// on each of the `4^subdiv` uniform sub-triangles of every element.
pub fn l2_error<T: Real, F: Fn(Vec2<T>) -> T>(mesh: &Mesh<T>, u: &FeFunction<T>, f: F, subdiv: u32) -> Result<T> {
    u.belongs_to(mesh)?;
    Ok(l2_error_coeffs(mesh, u.coeffs(), f, subdiv))
}

pub(crate) fn l2_error_coeffs<T: Real, F: Fn(Vec2<T>) -> T>(mesh: &Mesh<T>, coeffs: &[T], f: F, subdiv: u32) -> T {
    let nodes = midpoint_rule_nodes::<T>(subdiv);
    // Each node carries weight |T| / (3 * 4^subdiv).
    let node_weight = T::one() / T::from_usize_lossy(nodes.len());
    let mut total = T::zero();
    for (e, t) in mesh.elements().iter().enumerate() {
        let corners = mesh.element_corners(e);
        let vals = t.map(|i| coeffs[i]);
        let mut sum = T::zero();
        for b in &nodes {
            let x = [
                b[0] * corners[0][0] + b[1] * corners[1][0] + b[2] * corners[2][0],
                b[0] * corners[0][1] + b[1] * corners[1][1] + b[2] * corners[2][1],
            ];
            let uh = b[0] * vals[0] + b[1] * vals[1] + b[2] * vals[2];
            let d = uh - f(x);
            sum += d * d;
        }
        total += mesh.geometries()[e].area * node_weight * sum;
    }
    total.sqrt()
}

/// `sum_T |T| |grad u_T|`.
pub fn total_variation<T: Real>(mesh: &Mesh<T>, u: &FeFunction<T>) -> Result<T> {
    let grads = element_gradients(mesh, u)?;
    Ok(grads.iter().zip(mesh.geometries()).map(|(g, geo)| geo.area * norm(*g)).sum())
}

/// `sqrt(u^T M u)`.
pub fn m_norm<T: Real>(u: &FeFunction<T>, m: &SparseMatrix<T>) -> Result<T> {
    m_norm_coeffs(u.coeffs(), m)
}

pub fn m_norm_coeffs<T: Real>(u: &[T], m: &SparseMatrix<T>) -> Result<T> {
    Ok(m.quadratic_form(u)?.max(T::zero()).sqrt())
}
