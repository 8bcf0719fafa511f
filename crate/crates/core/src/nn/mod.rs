//! Dense 64-bit tensor core: the layers the classifier and field GANs are
//! built from, their reverse-mode gradients, Adam, gradient checking and
//! the checkpoint format.

mod adam;
pub mod checkpoint;
mod conv1d;
pub mod gradcheck;
mod layers;
mod loss;
mod lstm;
mod params;
mod tensor;

use thiserror::Error;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use conv1d::{conv1d_same, conv1d_same_backward, Conv1dGrads};
pub use layers::{
    conv2d, conv2d_backward, dense, dense_backward, dense_relu, leaky_relu, leaky_relu_slope,
    maxpool2d, maxpool2d_backward, maxpool2d_floor, relu, relu_backward, relu_in_place, sigmoid,
    Conv2dGrads, DenseGrads, PoolOutput, LEAKY_SLOPE,
};
pub use loss::{one_hot, softmax, softmax_cross_entropy, softmax_cross_entropy_backward};
pub use lstm::{lstm_step, lstm_step_backward, LstmCache, LstmGrads, LstmParams, GATES};
pub use params::{glorot_uniform, uniform_unit, ParamSet};
pub use tensor::Tensor;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("graph state: {0}")]
    GraphState(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
