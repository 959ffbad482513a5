//! Small dense neural-network kernel with hand-written backward passes.
//!
//! Everything is `f64`. There is no computation graph: each layer exposes a
//! forward pass and a matching backward pass, and the model composes them.

mod activation;
mod adam;
mod affine;
mod batchnorm;
mod dropout;
pub mod gradcheck;
mod tensor;

use thiserror::Error;

pub use activation::{
    entropy, log_softmax, logsumexp, sigmoid, softmax, softmax_in_place, softmax_rows,
    softmax_rows_backward, softplus, softplus_tensor,
};
pub use adam::{AdamConfig, AdamState, Moments, ParamBlock};
pub use affine::{AffineGrads, AffineLayer};
pub use batchnorm::{BatchNorm, BatchNormCache, BatchNormGrads, DEFAULT_EPS, DEFAULT_MOMENTUM};
pub use dropout::{dropout, DropoutMask};
pub use gradcheck::{gradient_check, GradCheck, GradCheckReport};
pub use tensor::Tensor2;

/// Whether layers use batch statistics and stochastic regularizers (train)
/// or frozen statistics and deterministic behaviour (infer).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("batch normalization in train mode needs at least 2 rows, got {rows}")]
    BatchTooSmall { rows: usize },
    #[error("{0}")]
    InvalidArgument(String),
}
