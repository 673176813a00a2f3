//! Reverse-mode differentiation: a node tape, a generic scalar trait, a small
//! forward-mode dual, and the finite-difference checker.

mod dual;
pub mod gradcheck;
mod real;
mod tape;

pub use dual::Dual3;
pub use real::{dot_const, sum, Real};
pub use tape::{Adjoints, Ctx, Emitted, Handle, Plain, SubTape, Tape, Var, NONE};
