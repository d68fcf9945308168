//! Minimal reverse-mode differentiation over dense matrices.

mod gradcheck;
mod params;
mod real;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_FLOOR};
pub use params::{GradBuf, NamedParam, ParamGrads, ParamId, ParamStore};
pub use real::{DType, Real};
pub use tape::{neg_log_softmax, sigmoid, softmax_into, Gradients, Tape, Var};
pub use tensor::Tensor;
