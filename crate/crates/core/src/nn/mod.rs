//! Dense feedforward networks: forward pass, losses, backpropagation and SGD.

mod layer;
mod matrix;
mod model;

pub use layer::{
    chain_backprop, sigmoid, sgd_update, Activation, Dense, LayerParams, LossKind, Parameters, Targets,
};
pub use matrix::Matrix;
pub use model::{argmax, argmax_rows, DeepModel, Gradients};

pub(crate) use layer::{add_bias, column_sums};
pub(crate) use matrix::{gemm_nn, gemm_nt, gemm_tn};
