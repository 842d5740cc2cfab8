//! Model architectures, forward pass with feature capture, training, checkpoints.

pub mod checkpoint;
mod model;
pub mod spec;
mod train;

pub use checkpoint::ModelCard;
pub use model::{top_k, ClassScores, FeatureCapture, Forward, Model};
pub use spec::{HeadKind, Layer, LayerInfo, ModelSpec, SpecError};
pub use train::{evaluate, sample_gradients, train, EpochStats, Evaluation, TrainConfig, TrainReport};
