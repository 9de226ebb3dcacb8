use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("element {element} is degenerate (signed area {signed_area:e})")]
    DegenerateElement { element: usize, signed_area: f64 },

    #[error("element index {index} out of range ({n_elements} elements)")]
    ElementOutOfRange { index: usize, n_elements: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("function belongs to a different mesh")]
    MeshMismatch,

    #[error("weight {value:e} on element {element} is not positive")]
    NonPositiveWeight { element: usize, value: f64 },

    #[error("weight is singular at r = 0 for this density")]
    SingularWeight,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("reflected vertex of {vertex} is not a mesh vertex")]
    NotReflectionSymmetric { vertex: usize },

    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("matrix is singular to working precision (pivot column {column})")]
    SingularMatrix { column: usize },

    #[error("ADMM did not converge in {iterations} iterations (primal {primal:e}, dual {dual:e})")]
    AdmmNotConverged { iterations: usize, primal: f64, dual: f64 },

    #[error("fixed-point iteration did not converge in {iterations} sweeps (last increment {increment:e})")]
    FixedPointNotConverged { iterations: usize, increment: f64 },

    #[error("time step {step} failed: {source}")]
    Step {
        step: usize,
        #[source]
        source: Box<FlowError>,
    },
}

impl FlowError {
    pub(crate) fn at_step(self, step: usize) -> Self {
        FlowError::Step { step, source: Box::new(self) }
    }
}

pub type Result<T, E = FlowError> = std::result::Result<T, E>;
