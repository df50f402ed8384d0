//! Minimal dense-matrix reverse-mode automatic differentiation.
//!
//! Everything is double precision. A fresh [`Tape`] is built per forward
//! evaluation; parameters live outside tapes as plain [`Matrix`] values and
//! are re-introduced as leaves each time.

mod check_suite;
mod gradcheck;
mod matrix;
mod optim;
mod tape;
#[cfg(test)]
mod tests;

pub use check_suite::{primitive_gradcheck, primitive_gradcheck_sweep};
pub use gradcheck::{central_diff, max_rel_err, rel_err, FD_EPS, REL_ERR_FLOOR};
pub use matrix::Matrix;
pub use optim::{adam_step, sgd_step, AdamState, Optimizer, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use tape::{Gradients, Neighbors, Tape, Tensor, PROB_EPS};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("matrix {rows}x{cols} cannot hold {len} values")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("rows have differing lengths")]
    RaggedRows,
    #[error("empty pool")]
    EmptyPool,
    #[error("row index {index} out of range for {rows} rows")]
    RowOutOfRange { index: usize, rows: usize },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("target is not a distribution (sum = {sum})")]
    NotADistribution { sum: f64 },
    #[error("backward requires a 1x1 scalar, got {rows}x{cols}")]
    NotScalar { rows: usize, cols: usize },
    #[error("parameter/gradient count mismatch ({params} params, {grads} grads)")]
    ParamCountMismatch { params: usize, grads: usize },
}
