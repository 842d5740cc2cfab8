//! Datasets: synthetic shapes, IDX files, MIL bags, and directory export.

pub mod bags;
pub mod export;
pub mod idx;
pub mod shapes;

use crate::tensor::Tensor;
use shapes::{BoundingBox, ShapeKind, ShapesImage};

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub pixels: Tensor,
    pub labels: Vec<f32>,
}

/// Labelled images of one uniform shape, with optional ground-truth boxes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    pub samples: Vec<Sample>,
    pub boxes: Option<Vec<Vec<(ShapeKind, BoundingBox)>>>,
}

impl LabeledSet {
    pub fn new(samples: Vec<Sample>) -> crate::Result<Self> {
        if let Some(first) = samples.first() {
            if let Some(bad) = samples
                .iter()
                .find(|s| s.pixels.shape() != first.pixels.shape() || s.labels.len() != first.labels.len())
            {
                return Err(crate::Error::InvalidArgument(format!(
                    "non-uniform samples: {:?} vs {:?}",
                    bad.pixels.shape(),
                    first.pixels.shape()
                )));
            }
        }
        Ok(Self { samples, boxes: None })
    }

    pub fn from_shapes(images: &[ShapesImage]) -> Self {
        Self {
            samples: images
                .iter()
                .map(|i| Sample {
                    pixels: i.pixels.clone(),
                    labels: i.labels.clone(),
                })
                .collect(),
            boxes: Some(images.iter().map(ShapesImage::boxes).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Mean pixel value over the whole set (0 when empty).
    pub fn pixel_mean(&self) -> f32 {
        let (sum, n) = self
            .samples
            .iter()
            .fold((0.0f64, 0usize), |(s, n), x| (s + x.pixels.data().iter().map(|&v| v as f64).sum::<f64>(), n + x.pixels.len()));
        if n == 0 {
            0.0
        } else {
            (sum / n as f64) as f32
        }
    }
}
