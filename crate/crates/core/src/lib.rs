//! Small-CNN interpretability engine: a reverse-mode autodiff tensor core,
//! trainable conv classifiers, saliency methods (CAM, Grad-CAM, guided
//! backprop, occlusion, activation and filter grids), class impressions,
//! attention-based multiple instance learning, and heatmap rendering.
//!
//! Data-parallel loops go through [`par`]; build without the default
//! `parallel` feature for a purely sequential engine.

pub mod data;
pub mod error;
pub mod impressions;
pub mod mil;
pub mod nn;
pub mod par;
pub mod render;
pub mod rng;
pub mod saliency;
pub mod tensor;

pub use error::{Error, Result};
pub use par::Exec;
pub use tensor::Tensor;
