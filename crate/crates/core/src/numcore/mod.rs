//! Dense matrices, reverse-mode differentiation, losses and optimizers.

mod ops;
mod optim;
mod params;
mod tensor;

pub use ops::{
    add, add_row, concat_cols, concat_rows, cross_entropy, layer_norm, matmul, mul, mul_col, relu, scale, select_rows,
    sigmoid, slice_cols, softmax_rows, sub, sum, sum_squares, transpose,
};
pub use optim::{adam_step, gd_step, OptimizerKind, OptimizerState};
pub(crate) use params::{read_u32, truncated};
pub use params::{BoundParams, ParamSet, CHECKPOINT_MAGIC};
pub use tensor::{backward, Tensor};
