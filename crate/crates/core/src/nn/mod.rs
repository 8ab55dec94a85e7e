//! Layer primitives with analytic forward and backward passes.
//!
//! Sequence tensors are `B x T x C` (batch-major). Every layer offers three
//! entry points:
//!
//! * `forward` runs in train or eval mode and returns the output together
//!   with a cache holding whatever the backward pass needs;
//! * `backward` consumes that cache and an output gradient, accumulates the
//!   parameter gradients and returns the input gradient;
//! * `infer` is eval-mode forward over `&self`, with no cache, so frozen
//!   parameters can serve concurrent callers.

mod batchnorm;
mod conv;
mod dense;
mod dropout;
pub mod gradcheck;
mod loss;
mod lstm;
mod param;

pub use batchnorm::{
    BatchNormCache, BatchNormLayer, DEFAULT_EPS as BATCHNORM_EPS,
    DEFAULT_MOMENTUM as BATCHNORM_MOMENTUM,
};
pub use conv::{Conv1dCache, Conv1dLayer};
pub use dense::{DenseCache, DenseLayer};
pub use dropout::{DropoutCache, DropoutLayer};
pub use loss::{cross_entropy, softmax, softmax_cross_entropy, PROBABILITY_FLOOR};
pub use lstm::{BiLstmCache, BiLstmLayer, LstmDirection};
pub use param::{xavier_bound, ParamTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `tanh` through a single `exp`; absolute error stays near 1e-16.
#[inline]
pub(crate) fn tanh(x: f64) -> f64 {
    let e = (-2.0 * x.abs()).exp();
    ((1.0 - e) / (1.0 + e)).copysign(x)
}
