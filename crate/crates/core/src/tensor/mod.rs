//! Dense matrices, reverse-mode differentiation and the layers built on them.

mod graph;
mod matrix;
mod nn;

pub use graph::{Graph, Var};
pub(crate) use graph::softmax_in_place;
pub use matrix::Matrix;
pub use nn::{
    add_grads, collect_grads, flatten_params, save_safetensors, Adam, AdamConfig, LayerNorm,
    Linear, Mlp, Module, TensorFile,
};
pub(crate) use nn::join;
