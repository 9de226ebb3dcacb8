//! Finite element laboratory for singular gradient flows: regularized
//! p-Laplace and total variation flow on P1 triangulations.
//!
//! The numerical core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the aliases below fix it to `f64`, which is what the
//! experiment harness uses.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod difference;
pub mod energy;
pub mod error;
pub mod exact;
pub mod fem;
pub mod implicit;
pub mod linsolve;
pub mod mesh;
pub mod scalar;
pub mod semi_implicit;

pub use energy::{Density, DensityKind, OrliczDensity, Regularization};
pub use error::{FlowError, Result};
pub use exact::{ExactKind, ExactSolution};
pub use fem::{DirichletMask, FeFunction};
pub use linsolve::{CgOptions, DenseMatrix, SparseMatrix};
pub use mesh::{build_square_mesh, ElementGeometry, Mesh};
pub use scalar::{Real, Vec2};
pub use semi_implicit::{FlowConfig, StabilityReport};

pub type Mesh64 = mesh::Mesh<f64>;
pub type FeFunction64 = fem::FeFunction<f64>;
pub type SparseMatrix64 = linsolve::SparseMatrix<f64>;
pub type Density64 = energy::Density<f64>;
pub type FlowConfig64 = semi_implicit::FlowConfig<f64>;
pub type StabilityReport64 = semi_implicit::StabilityReport<f64>;
pub type ExactSolution64 = exact::ExactSolution;

pub type Mesh32 = mesh::Mesh<f32>;
pub type FeFunction32 = fem::FeFunction<f32>;
pub type Density32 = energy::Density<f32>;
