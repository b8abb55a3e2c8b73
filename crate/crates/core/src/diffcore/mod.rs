//! Dense arrays, reverse-mode differentiation and SPD linear algebra.
//!
//! All VAE and metric-loss training goes through [`Tape`]; the GP uses
//! [`Cholesky`] with analytic gradients instead.

mod adam;
mod kernel;
mod linalg;
mod tape;
mod tensor;

pub use adam::Adam;
pub use linalg::{cholesky_solve, Cholesky, JITTER_MAX, JITTER_START};
pub use tape::{norm_p, Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::log_softmax_in_place;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: [usize; 2], right: [usize; 2] },
    #[error("tensor extents must be positive")]
    EmptyShape,
    #[error("data length {got} does not match shape (expected {expected})")]
    DataLength { expected: usize, got: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("expected a scalar, got shape {shape:?}")]
    NotScalar { shape: [usize; 2] },
    #[error("norm order must be at least 1, got {0}")]
    InvalidNormOrder(f64),
    #[error("row index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("graph cycle: node {node} depends on later node {parent}")]
    Cycle { node: usize, parent: usize },
    #[error("matrix is not positive definite even with jitter {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },
}
