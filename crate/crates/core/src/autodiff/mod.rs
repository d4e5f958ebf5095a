//! Minimal reverse-mode automatic differentiation over dense `f64` tensors,
//! plus the Adam optimizer.
//!
//! Everything is a row-major matrix: a batch of token sequences is stacked
//! into `(batch · seq) × features` rows, and the grouped primitives
//! ([`Tape::group_matmul`], [`Tape::prepend_row_per_group`],
//! [`Tape::add_tiled`]) operate per sequence.

mod adam;
mod gradcheck;
pub(crate) mod tape;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use gradcheck::{grad_check, GradCheckReport};
pub use tape::{Gradients, Tape, Var, LAYERNORM_EPS};
pub use tensor::{gemm, Tensor};
