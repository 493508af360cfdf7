//! Minimal dense-tensor engine with reverse-mode automatic differentiation.
//!
//! [`Tensor`] holds values; [`Var`] is a tensor recorded on a [`Tape`].
//! Operations are fallible in the candle style: shape mismatches, bad
//! indices and non-finite results all surface as [`TensorError`].

mod error;
mod gradcheck;
mod mlp;
mod params;
mod tape;
mod tensor;

pub use error::{Result, TensorError};
pub use gradcheck::grad_check;
pub use mlp::{mlp_apply, Activation, MlpSpec};
pub use params::{ParamSet, ParamVars};
pub use tape::{CustomOp, ElementwiseFn, Gradients, NodeId, Tape, Var};
pub use tensor::{broadcast_shapes, Tensor};

/// Shared-index helper for gather/scatter.
pub fn index(ids: impl Into<Vec<usize>>) -> std::rc::Rc<[usize]> {
    std::rc::Rc::from(ids.into())
}
