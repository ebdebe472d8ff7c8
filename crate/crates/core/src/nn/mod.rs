//! A small neural network library with hand-written backward passes, just
//! large enough for an Xception-style seam-carving detector.
//!
//! Activations are NHWC tensors. Layers cache what their backward pass
//! needs during [`Network::forward_train`]; [`Network::infer`] is a pure
//! function of weights and input and can run concurrently on shared
//! weights.

mod checkpoint;
mod layers;
mod loss;
mod network;
mod tensor;

pub use checkpoint::{read_checkpoint, write_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use layers::{
    conv2d_forward, depthwise_forward, pointwise_forward, separable_conv_forward, Conv2d, Dense,
    Layer, MaxPool, Norm, NormKind, Padding, Param, PointwiseConv, SeparableConv,
};
pub use loss::{bce_loss, sigmoid, BCE_EPS};
pub use network::{
    build_detector, DetectorConfig, HeadKind, LayerSpec, Network, NetworkSpec, TapPoint,
};
pub use tensor::{Real, Tensor};
