//! Gated-convolution inpainting networks, written against a small
//! hand-rolled operator set with explicit backward passes.

pub mod checkpoint;
pub mod conv;
pub mod input;
pub mod loss;
pub mod network;
pub mod tensor;
pub mod train;

pub use input::{assemble_input, input_plane, lbp_map, INPUT_CHANNELS};
pub use loss::{loss, FeatureExtractor, LossParts, LossWeights};
pub use network::{Architecture, GatedConv, Network};
pub use tensor::{Scalar, Tensor};
pub use train::{train, TrainConfig, TrainReport, TrainSample};
