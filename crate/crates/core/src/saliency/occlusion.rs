use serde::{Deserialize, Serialize};

use super::heatmap::{Heatmap, Method, Resolution};
use crate::error::{Error, Result};
use crate::nn::Model;
use crate::par::{self, Exec};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OcclusionConfig {
    pub patch: usize,
    pub stride: usize,
    /// Fill value written over the muted patch.
    pub baseline: f32,
}

impl OcclusionConfig {
    /// Patch 8, stride 4, baseline = the model's training-set mean pixel.
    pub fn for_model(model: &Model) -> Self {
        Self {
            patch: 8,
            stride: 4,
            baseline: model.spec().pixel_mean,
        }
    }

    pub fn validate(&self, h: usize, w: usize) -> Result<()> {
        if self.patch == 0 || self.patch > h.min(w) {
            return Err(Error::InvalidArgument(format!(
                "occlusion patch {} must be in 1..={}",
                self.patch,
                h.min(w)
            )));
        }
        if self.stride == 0 || self.stride > self.patch {
            return Err(Error::InvalidArgument(format!(
                "occlusion stride {} must be in 1..={}",
                self.stride, self.patch
            )));
        }
        Ok(())
    }

    /// Patch positions per axis for a side of `side` pixels.
    pub fn positions(&self, side: usize) -> usize {
        (side - self.patch) / self.stride + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionResult {
    /// Confidence drops averaged onto pixels, input resolution.
    pub heatmap: Heatmap,
    /// Drop per patch position, rows × cols of the stride grid.
    pub grid: Tensor,
    pub baseline_confidence: f32,
    /// Confidence with each patch muted, row-major over the stride grid.
    pub muted_confidences: Vec<f32>,
}

impl OcclusionResult {
    /// Top-left pixel of the stride-grid position with the largest drop.
    pub fn argmax_patch(&self, cfg: &OcclusionConfig) -> (usize, usize) {
        let cols = self.grid.shape()[1];
        let i = self.grid.argmax();
        ((i % cols) * cfg.stride, (i / cols) * cfg.stride)
    }
}

pub fn occlusion_map(model: &Model, image: &Tensor, class: usize, cfg: &OcclusionConfig) -> Result<OcclusionResult> {
    occlusion_map_with(model, image, class, cfg, Exec::default())
}

/// Mutes every stride-grid patch in turn (forwards run under `exec`) and
/// records `max(0, conf − conf_muted)` for class `class`.
pub fn occlusion_map_with(
    model: &Model,
    image: &Tensor,
    class: usize,
    cfg: &OcclusionConfig,
    exec: Exec,
) -> Result<OcclusionResult> {
    model.check_class(class)?;
    let [c, h, w] = image.dims::<3>("occlusion")?;
    cfg.validate(h, w)?;
    let base = model.predict(image)?.confidences[class];
    let (gh, gw) = (cfg.positions(h), cfg.positions(w));
    let muted = par::map_range(exec, gh * gw, |p| -> Result<f32> {
        let (y0, x0) = ((p / gw) * cfg.stride, (p % gw) * cfg.stride);
        let mut x = image.clone();
        let d = x.data_mut();
        for ch in 0..c {
            for y in y0..y0 + cfg.patch {
                let row = (ch * h + y) * w;
                d[row + x0..row + x0 + cfg.patch].fill(cfg.baseline);
            }
        }
        Ok(model.predict(&x)?.confidences[class])
    });
    let muted: Vec<f32> = muted.into_iter().collect::<Result<_>>()?;
    let drops: Vec<f32> = muted.iter().map(|&m| (base - m).max(0.0)).collect();

    let mut sum = vec![0.0f32; h * w];
    let mut count = vec![0u32; h * w];
    for (p, &drop) in drops.iter().enumerate() {
        let (y0, x0) = ((p / gw) * cfg.stride, (p % gw) * cfg.stride);
        for y in y0..y0 + cfg.patch {
            for x in x0..x0 + cfg.patch {
                sum[y * w + x] += drop;
                count[y * w + x] += 1;
            }
        }
    }
    let pixels = sum
        .iter()
        .zip(&count)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f32 })
        .collect();
    Ok(OcclusionResult {
        heatmap: Heatmap::new(Tensor::new(vec![h, w], pixels)?, Resolution::Input, Method::Occlusion, class)?,
        grid: Tensor::new(vec![gh, gw], drops)?,
        baseline_confidence: base,
        muted_confidences: muted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelSpec;

    #[test]
    fn grid_count_formula() {
        let cfg = OcclusionConfig {
            patch: 8,
            stride: 4,
            baseline: 0.0,
        };
        assert_eq!(cfg.positions(32), 7);
        let m = Model::build(ModelSpec::camnet(1, 32, &["a", "b"]), 3).unwrap();
        let r = occlusion_map(&m, &Tensor::full(&[1, 32, 32], 0.3), 0, &cfg).unwrap();
        assert_eq!(r.grid.shape(), &[7, 7]);
        assert_eq!(r.muted_confidences.len(), 49);
    }

    #[test]
    fn constant_image_with_matching_baseline_is_zero() {
        let m = Model::build(ModelSpec::fcnet(1, 32, &["a", "b"]), 2).unwrap();
        let cfg = OcclusionConfig {
            patch: 8,
            stride: 4,
            baseline: 0.4,
        };
        let r = occlusion_map(&m, &Tensor::full(&[1, 32, 32], 0.4), 1, &cfg).unwrap();
        assert!(r.heatmap.grid.data().iter().all(|&v| v == 0.0));
        assert!(r.grid.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn invalid_configs() {
        let m = Model::build(ModelSpec::camnet(1, 32, &["a"]), 2).unwrap();
        let x = Tensor::zeros(&[1, 32, 32]);
        for (patch, stride) in [(0, 1), (33, 1), (8, 0), (8, 9)] {
            let cfg = OcclusionConfig {
                patch,
                stride,
                baseline: 0.0,
            };
            assert!(occlusion_map(&m, &x, 0, &cfg).is_err(), "{patch} {stride}");
        }
    }

    #[test]
    fn uncovered_border_is_zero_and_modes_agree() {
        let m = Model::build(ModelSpec::camnet(1, 32, &["a"]), 5).unwrap();
        let mut r = crate::rng::SplitMix64::new(1);
        let x = Tensor::new(vec![1, 32, 32], r.uniform_vec(1024, 0.0, 1.0)).unwrap();
        let cfg = OcclusionConfig {
            patch: 7,
            stride: 5,
            baseline: 0.0,
        };
        let a = occlusion_map_with(&m, &x, 0, &cfg, Exec::Sequential).unwrap();
        let b = occlusion_map_with(&m, &x, 0, &cfg, Exec::Parallel).unwrap();
        assert_eq!(a, b);
        // positions 0,5,...,25 cover up to pixel 31 exactly; patch 7 stride 6 would not.
        let cfg = OcclusionConfig { stride: 6, ..cfg };
        let c = occlusion_map(&m, &x, 0, &cfg).unwrap();
        assert_eq!(c.grid.shape(), &[5, 5]);
        assert!((0..32).all(|y| c.heatmap.grid.data()[y * 32 + 31] == 0.0));
    }
}
