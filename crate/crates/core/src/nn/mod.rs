//! Minimal dense feed-forward networks with exact reverse-mode gradients.
//!
//! Everything is `f64`. A network is a chain of affine layers, each followed
//! by an elementwise [`Activation`]. [`Mlp::forward`] returns a cache that
//! [`Mlp::backward`] consumes to produce parameter gradients *and* the
//! gradient with respect to the input batch; the latter is what lets a
//! frozen critic pass a regularizer gradient back into the encoder.

mod activation;
mod loss;
mod mlp;
mod optim;

pub use activation::{log1p_exp, sigmoid, softplus, Activation, LEAKY_RELU_SLOPE};
pub use loss::softmax_cross_entropy;
pub use mlp::{ForwardCache, Layer, LayerGrads, Mlp, MlpGrads};
pub use optim::{cosine_lr, AdamState, MomentumState, Params};

/// Dense row-major 2-D array; rows are batch items.
pub type Matrix = ndarray::Array2<f64>;
/// Dense vector.
pub type Vector = ndarray::Array1<f64>;
