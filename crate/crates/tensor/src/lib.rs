//! Dense tensors with tape-based reverse-mode differentiation, the layer
//! operations used by the restoration and critic networks, first-order
//! optimizers, weight clipping and binary checkpoints.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod graph;
mod kernels;
pub mod layers;
pub mod params;
pub mod scalar;
pub mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use error::{Result, TensorError};
pub use graph::{BatchStats, Graph, Var};
pub use kernels::Padding;
pub use layers::{commit_batch_stats, BatchNorm, Conv2d, Dense, Mode};
pub use params::{clip_weights, optimizer_step, GradReport, Optimizer, ParamStore};
pub use scalar::{DType, Scalar};
pub use tensor::Tensor;
