//! Minimal reverse-mode differentiation over multivector-valued nodes.
//!
//! A [`Tape`] records values and the operation that produced each one.
//! Parents always precede children, so [`Tape::backward`] is a single sweep
//! in reverse insertion order.

mod gradcheck;
mod tape;

pub use gradcheck::{grad_check, GRADCHECK_FLOOR};
pub use tape::{gp_backward, Gradients, Tape, Var};
