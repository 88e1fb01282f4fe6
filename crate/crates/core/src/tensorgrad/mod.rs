//! Dense f64 tensors with reverse-mode differentiation.
//!
//! A [`Tape`] records every forward operation; [`Tape::backward`] walks the
//! record in reverse and accumulates parameter gradients into a
//! [`ParamStore`]. Only the operations the context encoders need are
//! provided, and broadcasting is limited to row-wise bias addition.

mod gradcheck;
mod param;
mod tape;
mod tensor;

pub use gradcheck::{gradient_check, relative_error, GradCheckReport, GRADIENT_FLOOR};
pub use param::{ParamId, ParamStore, Parameter};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
