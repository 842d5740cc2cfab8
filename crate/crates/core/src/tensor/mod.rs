//! Dense 32-bit tensors and a tape-based reverse-mode autodiff engine.
//!
//! Shapes are explicit everywhere; the only broadcast is bias addition in
//! [`ops::conv2d`] and [`ops::linear`].

pub mod ops;
mod optim;
mod tape;

use std::collections::BTreeMap;
use std::fmt;

pub use optim::sgd_step;
pub use tape::{GradientSet, NodeId, OpKind, ReluRule, Tape};

/// Named parameter (or named gradient) collection with deterministic order.
pub type ParamSet = BTreeMap<String, Tensor>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch on {axis}: expected {expected}, got {got}")]
    ShapeMismatch {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: expected rank {expected}, got shape {got:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        got: Vec<usize>,
    },
    #[error("{op}: {message}")]
    Invalid { op: &'static str, message: String },
    #[error("node {0} does not exist on this tape")]
    DanglingNode(usize),
    #[error("missing gradient for parameter `{0}`")]
    MissingGradient(String),
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Row-major dense tensor of `f32`.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f32> = self.data.iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("data", &preview)
            .field("len", &self.data.len())
            .finish()
    }
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::Invalid {
                op: "tensor",
                message: format!("dimensions must be positive, got {shape:?}"),
            });
        }
        let n = numel(&shape);
        if n != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "tensor",
                axis: "data length",
                expected: n,
                got: data.len(),
            });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f32) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero-sized dimension in {shape:?}");
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel(shape)],
        }
    }

    pub fn scalar(value: f32) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f32>) -> Self {
        let n = data.len().max(1);
        let data = if data.is_empty() { vec![0.0] } else { data };
        Self {
            shape: vec![n],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data)
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f32 {
        self.data[0]
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scale(&self, factor: f32) -> Self {
        self.map(|v| v * factor)
    }

    pub fn sum(&self) -> f32 {
        self.data.iter().sum()
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn min(&self) -> f32 {
        self.data.iter().copied().fold(f32::INFINITY, f32::min)
    }

    /// Row-major index of the first maximal element.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn dot(&self, other: &Tensor) -> Result<f32> {
        self.expect_same_shape("dot", other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_same_shape("add", other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn expect_same_shape(&self, op: &'static str, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            if self.shape.len() != other.shape.len() {
                return Err(TensorError::Rank {
                    op,
                    expected: self.shape.len(),
                    got: other.shape.clone(),
                });
            }
            for (&a, &b) in self.shape.iter().zip(&other.shape) {
                if a != b {
                    return Err(TensorError::ShapeMismatch {
                        op,
                        axis: "dimension",
                        expected: a,
                        got: b,
                    });
                }
            }
        }
        Ok(())
    }

    pub(crate) fn dims<const R: usize>(&self, op: &'static str) -> Result<[usize; R]> {
        if self.shape.len() != R {
            return Err(TensorError::Rank {
                op,
                expected: R,
                got: self.shape.clone(),
            });
        }
        let mut out = [0; R];
        out.copy_from_slice(&self.shape);
        Ok(out)
    }
}
