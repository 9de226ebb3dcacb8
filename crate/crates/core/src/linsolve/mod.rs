//! Sparse symmetric solves and a dense reference solver.

mod cg;
mod dense;
mod sparse;

pub use cg::{cg_solve, cg_solve_from, CgOptions, CgSolution};
pub use dense::{dense_solve, DenseMatrix};
pub use sparse::SparseMatrix;
