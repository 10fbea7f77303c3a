//! Dense CNN engine: forward inference, backpropagation and mask-respecting
//! SGD for LeNet-class networks, in 64-bit floating point.

mod arch;
mod compact;
mod network;
mod ops;
mod tensor;
mod train;

pub use arch::{Layer, NetworkArch, WeightShape};
pub use network::{argmax, forward, loss_and_backward, LayerParams, Params, Weights};
pub use ops::{conv2d_forward, fc_forward, maxpool_forward, softmax};
pub use tensor::{Tensor2, Tensor4};
pub use train::{mean_loss, predict_error, train_masked, TrainConfig};
