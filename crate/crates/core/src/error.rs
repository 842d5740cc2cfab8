use crate::data::idx::IdxError;
use crate::nn::checkpoint::CheckpointError;
use crate::nn::spec::SpecError;
use crate::render::codec::CodecError;
use crate::tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model spec: {0}")]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Idx(#[from] IdxError),
    /// CAM needs the captured maps to feed GAP and then the class linear directly.
    #[error("cam_inapplicable: layer {index} ({layer}) sits between the captured feature maps and the class scores")]
    CamInapplicable { index: usize, layer: String },
    #[error("class index {index} out of range for {classes} classes")]
    InvalidClass { index: usize, classes: usize },
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("input shape mismatch: model expects {expected:?}, got {got:?}")]
    InputShape { expected: Vec<usize>, got: Vec<usize> },
    #[error("{0}")]
    InvalidArgument(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
