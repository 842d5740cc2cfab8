//! Class activation maps and their gradient-weighted generalisation.

use super::heatmap::{Heatmap, Method, Resolution};
use crate::error::{Error, Result};
use crate::nn::{FeatureCapture, Layer, Model};
use crate::tensor::{Tensor, TensorError};

/// `Σ_k weights[k] · maps[k]` for K × H × W maps, signed.
pub fn weighted_sum(maps: &Tensor, weights: &[f32]) -> Result<Tensor> {
    let [k, h, w] = maps.dims::<3>("weighted_sum")?;
    if weights.len() != k {
        return Err(TensorError::ShapeMismatch {
            op: "weighted_sum",
            axis: "channels",
            expected: k,
            got: weights.len(),
        }
        .into());
    }
    let mut out = vec![0.0f32; h * w];
    for (plane, &wk) in maps.data().chunks_exact(h * w).zip(weights) {
        for (o, &a) in out.iter_mut().zip(plane) {
            *o += wk * a;
        }
    }
    Ok(Tensor::new(vec![h, w], out)?)
}

/// Name of the linear layer that produces class logits.
fn class_linear(model: &Model) -> String {
    let infos = model.layer_infos();
    let info = infos
        .iter()
        .rev()
        .find(|i| matches!(i.layer, Layer::Linear { .. }))
        .expect("checked specs end in linear");
    info.params[0].0.clone()
}

fn cam_weights(model: &Model, class: usize) -> Result<Vec<f32>> {
    if let Err((index, layer)) = model.spec().cam_compatible() {
        return Err(Error::CamInapplicable { index, layer });
    }
    model.check_class(class)?;
    let w = &model.params()[&class_linear(model)];
    let k = w.shape()[1];
    Ok(w.data()[class * k..(class + 1) * k].to_vec())
}

/// Signed CAM map `Σ_k w_k^c A^k` at feature resolution.
pub fn cam_signed(model: &Model, image: &Tensor, class: usize) -> Result<Tensor> {
    let weights = cam_weights(model, class)?;
    let f = model.forward(image)?;
    weighted_sum(&f.capture.maps, &weights)
}

/// CAM, clamped at zero. Fails with [`Error::CamInapplicable`] unless the
/// captured maps feed GAP and then the class linear directly.
pub fn cam(model: &Model, image: &Tensor, class: usize) -> Result<Heatmap> {
    let signed = cam_signed(model, image, class)?;
    Heatmap::new(signed.map(|v| v.max(0.0)), Resolution::Feature, Method::Cam, class)
}

/// Grad-CAM from captured maps and their gradients:
/// `α_k = mean_{y,x} ∂y^c/∂A^k`, map `= max(0, Σ_k α_k A^k)`.
pub fn gradcam_from_capture(capture: &FeatureCapture) -> Result<Tensor> {
    let grads = capture
        .grads
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("feature capture has no gradients".into()))?;
    capture.maps.expect_same_shape("gradcam", grads)?;
    let z = capture.z() as f32;
    let alphas: Vec<f32> = grads.data().chunks_exact(capture.z()).map(|g| g.iter().sum::<f32>() / z).collect();
    Ok(weighted_sum(&capture.maps, &alphas)?.map(|v| v.max(0.0)))
}

/// Forward plus backward of the one-hot logit seed (scaled by `seed_scale`)
/// to the capture layer. Returns the capture with gradients attached.
pub fn capture_with_grads(model: &Model, image: &Tensor, class: usize, seed_scale: f32) -> Result<(FeatureCapture, Vec<f32>)> {
    model.check_class(class)?;
    let f = model.forward(image)?;
    let seed = f.logit_seed(class, seed_scale);
    let grads = f.tape.backward(f.logits, &seed, &[f.capture_node])?;
    let g = grads.get(f.capture_node).expect("requested").clone();
    let g = g.reshape(f.capture.maps.shape())?;
    let mut cap = f.capture;
    cap.grads = Some(g);
    Ok((cap, f.scores.confidences))
}

/// Grad-CAM at feature resolution with the one-hot seed scaled by `seed_scale`.
pub fn gradcam_scaled(model: &Model, image: &Tensor, class: usize, seed_scale: f32) -> Result<Heatmap> {
    let (cap, _) = capture_with_grads(model, image, class, seed_scale)?;
    Heatmap::new(gradcam_from_capture(&cap)?, Resolution::Feature, Method::Gradcam, class)
}

/// Grad-CAM at feature resolution; works for any architecture with a capture layer.
pub fn gradcam(model: &Model, image: &Tensor, class: usize) -> Result<Heatmap> {
    gradcam_scaled(model, image, class, 1.0)
}
