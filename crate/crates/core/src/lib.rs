#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` rejects NaN too.

pub mod autograd;
pub mod gan;
pub mod rng;
pub mod screen;
pub mod svm;
pub mod axes;
pub mod eval;
