//! Flat-parameter differentiable classifiers.
//!
//! Logistic regression, a one-hidden-layer MLP, a frozen backbone with a
//! trainable adapter head, and a soft-prompt wrapper. All share softmax
//! cross-entropy, analytic gradients and plain minibatch SGD.

mod net;
mod params;
mod spec;
mod train;

pub use net::{argmax, finite_diff_grad, forward, loss, loss_and_grad, predict, Batch};
pub(crate) use net::row_loss;
pub use params::{Layout, ParameterVector, Segment};
pub use spec::{glorot_bound, init_params, ModelKind, ModelSpec};
pub use train::sgd_epoch;
