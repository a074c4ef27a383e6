//! Reverse-mode differentiation over dense row-major tensors.
//!
//! The tape supports exactly the operations the occupancy decoders need:
//! affine layers, ReLU, sigmoid, column concatenation, row broadcasting,
//! inverted dropout, elementwise products and a clamped binary
//! cross-entropy. Parameters live in a [`ParamStore`] and are referenced by
//! the tape without copying; [`Adam`] updates them in place per group.

mod adam;
mod error;
mod gradcheck;
mod params;
mod real;
pub mod rng;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig, Moments};
pub use error::{AutodiffError, Result};
pub use gradcheck::{grad_check, GradCheckReport, ParamGradError, FD_STEP};
pub use params::{GroupId, ParamId, ParamStore};
pub use real::Real;
pub use tape::{Gradients, OpKind, Tape, Var, BCE_EPS};
pub use tensor::Tensor;
