use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Resolution {
    Feature,
    Input,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Cam,
    Gradcam,
    GuidedBackprop,
    GuidedGradcam,
    Occlusion,
    ActivationGrid,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Cam,
        Method::Gradcam,
        Method::GuidedBackprop,
        Method::GuidedGradcam,
        Method::Occlusion,
        Method::ActivationGrid,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cam => "cam",
            Method::Gradcam => "gradcam",
            Method::GuidedBackprop => "guided_backprop",
            Method::GuidedGradcam => "guided_gradcam",
            Method::Occlusion => "occlusion",
            Method::ActivationGrid => "activation_grid",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown method `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum NormState {
    Raw,
    /// Max is 1, or the map is all zero and `degenerate` is set.
    UnitRange { degenerate: bool },
}

/// Nonnegative single-channel H × W map with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub grid: Tensor,
    pub resolution: Resolution,
    pub method: Method,
    pub class: usize,
    pub state: NormState,
}

impl Heatmap {
    pub fn new(grid: Tensor, resolution: Resolution, method: Method, class: usize) -> Result<Self> {
        if grid.rank() != 2 {
            return Err(Error::InvalidArgument(format!("heatmap grid must be H×W, got {:?}", grid.shape())));
        }
        if let Some(v) = grid.data().iter().find(|v| !(**v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("heatmap entries must be >= 0, found {v}")));
        }
        Ok(Self {
            grid,
            resolution,
            method,
            class,
            state: NormState::Raw,
        })
    }

    pub fn height(&self) -> usize {
        self.grid.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.grid.shape()[1]
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self.state, NormState::UnitRange { degenerate: true })
    }

    /// `(x, y)` of the first maximal cell.
    pub fn argmax(&self) -> (usize, usize) {
        let i = self.grid.argmax();
        (i % self.width(), i / self.width())
    }
}
