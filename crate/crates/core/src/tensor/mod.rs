//! Minimal dense numerical kernel.

mod gradcheck;
mod loss;
mod matrix;
mod mlp;
mod optim;
mod rng;

pub use gradcheck::{grad_check, loss_and_grad, LossKind};
pub use loss::{
    entropy, mse, shannon_entropy, soft_cross_entropy, softmax, softmax_cross_entropy,
    softmax_in_place, PROB_FLOOR,
};
pub use matrix::{argmax, Matrix};
pub use mlp::{Activation, Backprop, ForwardCache, Gradients, Mlp, MlpSpec, Mode};
pub use optim::{sgd_update, Sgd, SgdConfig};
pub use rng::Rng;
