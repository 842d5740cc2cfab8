//! Class-conditional explanation maps.

mod cam;
mod grids;
mod guided;
mod heatmap;
mod occlusion;

pub use cam::{cam, cam_signed, capture_with_grads, gradcam, gradcam_from_capture, gradcam_scaled, weighted_sum};
pub use grids::{activation_channel, activation_grid, filter_grid, TileGrid, TileScale, FLAT_KERNEL_GRAY};
pub use guided::{guided_backprop, guided_gradcam, input_gradient, magnitude_map};
pub use heatmap::{Heatmap, Method, NormState, Resolution};
pub use occlusion::{occlusion_map, occlusion_map_with, OcclusionConfig, OcclusionResult};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{top_k, ClassScores, Model};
use crate::par::Exec;
use crate::render::{self, ColorMap, RgbImage};
use crate::tensor::Tensor;

/// Per-method knobs for [`explain`]. Unset fields take the method defaults.
#[derive(Debug, Clone, Default)]
pub struct ExplainParams {
    pub occlusion: Option<OcclusionConfig>,
    /// Layer for activation grids; defaults to the capture layer.
    pub layer: Option<String>,
    pub exec: Exec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Provenance {
    pub model: String,
    pub layer: String,
    pub class: usize,
    pub class_name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionScores {
    pub baseline_confidence: f32,
    pub muted_confidences: Vec<f32>,
    pub grid: Tensor,
}

/// Outcome of one explanation request.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyResult {
    /// Unit-range map. Input resolution except for activation grids, which
    /// carry the tile mosaic.
    pub heatmap: Heatmap,
    /// Signed C × H × W saliency, for the guided methods.
    pub input_saliency: Option<Tensor>,
    pub occlusion: Option<OcclusionScores>,
    pub tiles: Option<TileGrid>,
    pub scores: ClassScores,
    pub provenance: Provenance,
}

impl SaliencyResult {
    /// Colour-mapped blend of the heatmap over `image`. The image is
    /// resampled to the heatmap's size when they differ (activation mosaics).
    pub fn overlay(&self, image: &Tensor, cm: &ColorMap, alpha: f32) -> Result<RgbImage> {
        let (h, w) = (self.heatmap.height(), self.heatmap.width());
        let base = if image.shape()[1..] == [h, w] {
            render::tensor_to_rgb(image)?
        } else {
            render::tensor_to_rgb(&render::resize_bilinear(image, h, w)?.map(|v| v.clamp(0.0, 1.0)))?
        };
        Ok(render::render_overlay(&base, &self.heatmap, cm, alpha)?.0)
    }
}

fn lift(model: &Model, map: &Heatmap) -> Result<Heatmap> {
    let [_, h, w] = model.spec().input;
    Ok(render::normalize(&render::upsample_bilinear(map, h, w)?))
}

fn from_grid(grid: Tensor, method: Method, class: usize) -> Result<Heatmap> {
    Ok(render::normalize(&Heatmap::new(grid, Resolution::Input, method, class)?))
}

/// Runs `method` for `class` (top-1 when `None`) and returns a unit-range map.
pub fn explain(
    model: &Model,
    image: &Tensor,
    method: Method,
    class: Option<usize>,
    params: &ExplainParams,
) -> Result<SaliencyResult> {
    let scores = model.predict(image)?;
    let class = match class {
        Some(c) => {
            model.check_class(c)?;
            c
        }
        None => {
            let name = &top_k(&scores, 1)?[0].0;
            model.spec().class_index(name).expect("class from own list")
        }
    };
    let capture = model.spec().capture_layer.clone();
    let mut input_saliency = None;
    let mut occlusion = None;
    let mut tiles = None;
    let (heatmap, layer) = match method {
        Method::Cam => (lift(model, &cam(model, image, class)?)?, capture),
        Method::Gradcam => (lift(model, &gradcam(model, image, class)?)?, capture),
        Method::GuidedBackprop => {
            let gbp = guided_backprop(model, image, class)?;
            let map = from_grid(magnitude_map(&gbp)?, method, class)?;
            input_saliency = Some(gbp);
            (map, "input".to_string())
        }
        Method::GuidedGradcam => {
            let up = lift(model, &gradcam(model, image, class)?)?;
            let ggc = guided_gradcam(&up, &guided_backprop(model, image, class)?)?;
            let map = from_grid(magnitude_map(&ggc)?, method, class)?;
            input_saliency = Some(ggc);
            (map, capture)
        }
        Method::Occlusion => {
            let cfg = params.occlusion.unwrap_or_else(|| OcclusionConfig::for_model(model));
            let r = occlusion_map_with(model, image, class, &cfg, params.exec)?;
            occlusion = Some(OcclusionScores {
                baseline_confidence: r.baseline_confidence,
                muted_confidences: r.muted_confidences,
                grid: r.grid,
            });
            (render::normalize(&r.heatmap), "input".to_string())
        }
        Method::ActivationGrid => {
            let layer = params.layer.clone().unwrap_or(capture);
            let g = activation_grid(model, image, &layer)?;
            let [_, gh, gw] = g.grid.dims::<3>("activation_grid")?;
            let mosaic = g.grid.clone().reshape(&[gh, gw])?;
            let map = render::normalize(&Heatmap::new(mosaic, Resolution::Feature, method, class)?);
            tiles = Some(g);
            (map, layer)
        }
    };
    if layer.is_empty() {
        return Err(Error::InvalidArgument("explanation layer is unnamed".into()));
    }
    Ok(SaliencyResult {
        heatmap,
        input_saliency,
        occlusion,
        tiles,
        provenance: Provenance {
            model: model.spec().name.clone(),
            layer,
            class,
            class_name: model.spec().classes[class].clone(),
        },
        scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelSpec;
    use crate::rng::SplitMix64;

    fn img(seed: u64) -> Tensor {
        let mut r = SplitMix64::new(seed);
        Tensor::new(vec![1, 32, 32], r.uniform_vec(1024, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn every_method_gives_unit_range_maps() {
        let m = Model::build(ModelSpec::camnet(1, 32, &["a", "b", "c"]), 4).unwrap();
        let x = img(2);
        for method in Method::ALL {
            let r = explain(&m, &x, method, Some(1), &ExplainParams::default()).unwrap();
            assert!(matches!(r.heatmap.state, NormState::UnitRange { .. }), "{method:?}");
            let max = r.heatmap.grid.max();
            assert!(max == 1.0 || r.heatmap.is_degenerate(), "{method:?} max {max}");
            assert_eq!(r.provenance.class, 1);
            assert!(!r.provenance.layer.is_empty());
            let ov = r.overlay(&x, &ColorMap::thermal(), 0.5).unwrap();
            assert_eq!((ov.width, ov.height), (r.heatmap.width(), r.heatmap.height()));
        }
    }

    #[test]
    fn default_class_is_top1() {
        let m = Model::build(ModelSpec::camnet(1, 32, &["a", "b", "c"]), 5).unwrap();
        let x = img(3);
        let r = explain(&m, &x, Method::Gradcam, None, &ExplainParams::default()).unwrap();
        let top = &top_k(&r.scores, 1).unwrap()[0].0;
        assert_eq!(&r.provenance.class_name, top);
    }

    #[test]
    fn seed_scaling_is_linear() {
        let m = Model::build(ModelSpec::fcnet(1, 32, &["a", "b"]), 6).unwrap();
        let x = img(4);
        let a = gradcam_scaled(&m, &x, 0, 1.0).unwrap();
        let b = gradcam_scaled(&m, &x, 0, 4.0).unwrap();
        for (p, q) in a.grid.data().iter().zip(b.grid.data()) {
            assert_eq!(p * 4.0, *q);
        }
        assert_eq!(a.argmax(), b.argmax());
    }

    #[test]
    fn cam_on_fcnet_surfaces_gate() {
        let m = Model::build(ModelSpec::fcnet(1, 32, &["a", "b"]), 6).unwrap();
        let e = explain(&m, &img(1), Method::Cam, None, &ExplainParams::default()).unwrap_err();
        assert!(e.to_string().starts_with("cam_inapplicable"));
    }
}
