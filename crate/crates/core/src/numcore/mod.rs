//! Dense double-precision tensors with reverse-mode differentiation.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{
    compare_gradients, finite_diff_check, relative_deviation, BlockCheck, CheckStatus,
    GradCheckReport, SCALE_FLOOR,
};
pub use graph::{Gradients, Graph, Var, EPS_FLOOR};
pub use tensor::Tensor;

#[cfg(test)]
mod tests;
