use serde::{Deserialize, Serialize};

use crate::tensor::ops::conv_out_dim;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv {
        out: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
    },
    Relu,
    Maxpool2,
    Gap,
    Flatten,
    Linear {
        out: usize,
    },
    Sigmoid,
    Softmax,
}

impl Layer {
    fn stem(&self) -> &'static str {
        match self {
            Layer::Conv { .. } => "conv",
            Layer::Relu => "relu",
            Layer::Maxpool2 => "maxpool",
            Layer::Gap => "gap",
            Layer::Flatten => "flatten",
            Layer::Linear { .. } => "linear",
            Layer::Sigmoid => "sigmoid",
            Layer::Softmax => "softmax",
        }
    }
}

/// Output head of a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Independent sigmoid per class.
    MultiLabel,
    /// Softmax over classes.
    SingleLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    /// Per-sample input shape `[C, H, W]`.
    pub input: [usize; 3],
    pub layers: Vec<Layer>,
    pub classes: Vec<String>,
    /// Name of the layer whose output is captured as the rectified feature maps.
    pub capture_layer: String,
    /// Mean training pixel value; fill for occlusion and letterboxing.
    #[serde(default)]
    pub pixel_mean: f32,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("layer {index} ({name}): {message}")]
pub struct SpecError {
    pub index: usize,
    pub name: String,
    pub message: String,
}

/// Static description of one layer after shape checking.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerInfo {
    pub name: String,
    pub layer: Layer,
    /// Per-sample output shape (rank 3 for spatial layers, rank 1 otherwise).
    pub out_shape: Vec<usize>,
    /// `(param name, shape)` for weight then bias, when the layer has parameters.
    pub params: Vec<(String, Vec<usize>)>,
}

/// Canonical layer names: stem plus per-stem 1-based counter (`conv1`, `relu2`, ...).
pub fn layer_names(layers: &[Layer]) -> Vec<String> {
    let mut counts = std::collections::HashMap::new();
    layers
        .iter()
        .map(|l| {
            let c = counts.entry(l.stem()).or_insert(0usize);
            *c += 1;
            format!("{}{}", l.stem(), c)
        })
        .collect()
}

fn trunk() -> Vec<Layer> {
    let conv = |out| Layer::Conv {
        out,
        kernel: 3,
        stride: 1,
        pad: 1,
    };
    vec![
        conv(8),
        Layer::Relu,
        Layer::Maxpool2,
        conv(16),
        Layer::Relu,
        Layer::Maxpool2,
        conv(16),
        Layer::Relu,
    ]
}

impl ModelSpec {
    /// conv-relu-pool ×2, conv-relu, GAP, linear, sigmoid.
    pub fn camnet(channels: usize, side: usize, classes: &[&str]) -> Self {
        let mut layers = trunk();
        layers.extend([Layer::Gap, Layer::Linear { out: classes.len() }, Layer::Sigmoid]);
        Self {
            name: "camnet".into(),
            input: [channels, side, side],
            layers,
            classes: classes.iter().map(|s| s.to_string()).collect(),
            capture_layer: "relu3".into(),
            pixel_mean: 0.0,
        }
    }

    /// Same trunk as [`camnet`](Self::camnet), then flatten-linear(64)-relu-linear-sigmoid.
    pub fn fcnet(channels: usize, side: usize, classes: &[&str]) -> Self {
        let mut layers = trunk();
        layers.extend([
            Layer::Flatten,
            Layer::Linear { out: 64 },
            Layer::Relu,
            Layer::Linear { out: classes.len() },
            Layer::Sigmoid,
        ]);
        Self {
            name: "fcnet".into(),
            input: [channels, side, side],
            layers,
            classes: classes.iter().map(|s| s.to_string()).collect(),
            capture_layer: "relu3".into(),
            pixel_mean: 0.0,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn layer_names(&self) -> Vec<String> {
        layer_names(&self.layers)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn capture_index(&self) -> Option<usize> {
        self.layer_names().iter().position(|n| *n == self.capture_layer)
    }

    pub fn head(&self) -> HeadKind {
        match self.layers.last() {
            Some(Layer::Softmax) => HeadKind::SingleLabel,
            _ => HeadKind::MultiLabel,
        }
    }

    /// Checks the layer chain and returns per-layer shapes.
    pub fn check(&self) -> Result<Vec<LayerInfo>, SpecError> {
        let names = self.layer_names();
        let err = |index: usize, message: String| SpecError {
            index,
            name: names.get(index).cloned().unwrap_or_else(|| "<none>".into()),
            message,
        };
        if self.input.iter().any(|&d| d == 0) {
            return Err(err(0, format!("input shape {:?} has a zero dimension", self.input)));
        }
        if self.classes.is_empty() {
            return Err(err(0, "class list is empty".into()));
        }
        let mut shape: Vec<usize> = self.input.to_vec();
        let mut infos = Vec::with_capacity(self.layers.len());
        let mut seen_collapse = false;
        let mut capture_ok = false;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut params = vec![];
            match *layer {
                Layer::Conv {
                    out,
                    kernel,
                    stride,
                    pad,
                } => {
                    let [c, h, w] = spatial(&shape).ok_or_else(|| err(i, "conv needs a C×H×W input".into()))?;
                    if out == 0 || kernel == 0 || stride == 0 {
                        return Err(err(i, "conv out, kernel and stride must be >= 1".into()));
                    }
                    let oh = conv_out_dim(h, kernel, stride, pad).ok_or_else(|| err(i, "kernel larger than input".into()))?;
                    let ow = conv_out_dim(w, kernel, stride, pad).ok_or_else(|| err(i, "kernel larger than input".into()))?;
                    params.push((format!("{}.weight", names[i]), vec![out, c, kernel, kernel]));
                    params.push((format!("{}.bias", names[i]), vec![out]));
                    shape = vec![out, oh, ow];
                }
                Layer::Relu | Layer::Sigmoid => {}
                Layer::Softmax => {
                    if shape.len() != 1 {
                        return Err(err(i, "softmax needs a flat input".into()));
                    }
                }
                Layer::Maxpool2 => {
                    let [c, h, w] = spatial(&shape).ok_or_else(|| err(i, "maxpool needs a C×H×W input".into()))?;
                    if h % 2 != 0 || w % 2 != 0 {
                        return Err(err(i, format!("maxpool needs even spatial dims, got {h}×{w}")));
                    }
                    shape = vec![c, h / 2, w / 2];
                }
                Layer::Gap => {
                    let [c, _, _] = spatial(&shape).ok_or_else(|| err(i, "gap needs a C×H×W input".into()))?;
                    shape = vec![c];
                    seen_collapse = true;
                }
                Layer::Flatten => {
                    let [c, h, w] = spatial(&shape).ok_or_else(|| err(i, "flatten needs a C×H×W input".into()))?;
                    shape = vec![c * h * w];
                    seen_collapse = true;
                }
                Layer::Linear { out } => {
                    if shape.len() != 1 {
                        return Err(err(i, format!("linear needs a flat input, got {shape:?}; add gap or flatten first")));
                    }
                    if out == 0 {
                        return Err(err(i, "linear out must be >= 1".into()));
                    }
                    params.push((format!("{}.weight", names[i]), vec![out, shape[0]]));
                    params.push((format!("{}.bias", names[i]), vec![out]));
                    shape = vec![out];
                }
            }
            if names[i] == self.capture_layer {
                if seen_collapse || shape.len() != 3 {
                    return Err(err(i, "capture layer must be a spatial map before any gap/flatten".into()));
                }
                let after_conv = i > 0 && matches!(self.layers[i - 1], Layer::Conv { .. });
                if !matches!(layer, Layer::Relu) || !after_conv {
                    return Err(err(i, "capture layer must be the ReLU directly after a conv".into()));
                }
                capture_ok = true;
            }
            infos.push(LayerInfo {
                name: names[i].clone(),
                layer: *layer,
                out_shape: shape.clone(),
                params,
            });
        }
        if !capture_ok {
            return Err(err(
                self.layers.len().saturating_sub(1),
                format!("capture layer `{}` not found", self.capture_layer),
            ));
        }
        let last = self.layers.len() - 1;
        let (head_ok, pre) = match self.layers[last] {
            Layer::Sigmoid | Layer::Softmax => (true, self.layers.get(last.wrapping_sub(1))),
            _ => (false, None),
        };
        if !head_ok || !matches!(pre, Some(Layer::Linear { .. })) {
            return Err(err(last, "model must end with linear followed by sigmoid or softmax".into()));
        }
        if shape != [self.classes.len()] {
            return Err(err(
                last,
                format!("head emits {} outputs for {} classes", shape[0], self.classes.len()),
            ));
        }
        // No conv after the capture layer, so the captured map is the last conv's output.
        let cap = self.capture_index().expect("checked above");
        if let Some(j) = self.layers[cap + 1..].iter().position(|l| matches!(l, Layer::Conv { .. })) {
            return Err(err(cap + 1 + j, "capture layer must follow the last conv".into()));
        }
        Ok(infos)
    }

    /// `Ok(())` when the head is capture → gap → linear → activation, the only
    /// shape CAM supports. Otherwise the index and name of the first layer
    /// that breaks the pattern.
    pub fn cam_compatible(&self) -> Result<(), (usize, String)> {
        let names = self.layer_names();
        let cap = self.capture_index().unwrap_or(0);
        let tail = &self.layers[cap + 1..];
        let expected_ok = |j: usize, l: &Layer| match j {
            0 => matches!(l, Layer::Gap),
            1 => matches!(l, Layer::Linear { .. }),
            2 => matches!(l, Layer::Sigmoid | Layer::Softmax),
            _ => false,
        };
        for (j, l) in tail.iter().enumerate() {
            if !expected_ok(j, l) {
                return Err((cap + 1 + j, names[cap + 1 + j].clone()));
            }
        }
        if tail.len() < 3 {
            return Err((self.layers.len() - 1, names[self.layers.len() - 1].clone()));
        }
        Ok(())
    }
}

fn spatial(shape: &[usize]) -> Option<[usize; 3]> {
    match shape {
        &[c, h, w] => Some([c, h, w]),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLASSES: [&str; 3] = ["square", "circle", "cross"];

    #[test]
    fn default_specs_check() {
        let cam = ModelSpec::camnet(1, 32, &CLASSES);
        let infos = cam.check().unwrap();
        let cap = cam.capture_index().unwrap();
        assert_eq!(infos[cap].out_shape, vec![16, 8, 8]);
        assert_eq!(infos.last().unwrap().out_shape, vec![3]);
        let lin = infos.iter().find(|i| i.name == "linear1").unwrap();
        assert_eq!(lin.params[0].1, vec![3, 16]);
        assert!(cam.cam_compatible().is_ok());

        let fc = ModelSpec::fcnet(3, 32, &CLASSES);
        fc.check().unwrap();
        let (idx, name) = fc.cam_compatible().unwrap_err();
        assert_eq!((idx, name.as_str()), (8, "flatten1"));
    }

    #[test]
    fn hidden_linear_before_gap_rejected() {
        let mut spec = ModelSpec::camnet(1, 32, &CLASSES);
        let gap = spec.layers.iter().position(|l| *l == Layer::Gap).unwrap();
        spec.layers.insert(gap, Layer::Linear { out: 8 });
        let e = spec.check().unwrap_err();
        assert_eq!(e.index, gap);
        assert_eq!(e.name, "linear1");
    }

    #[test]
    fn capture_must_be_spatial_relu() {
        let mut spec = ModelSpec::fcnet(1, 32, &CLASSES);
        spec.capture_layer = "relu4".into();
        assert!(spec.check().is_err());
        spec.capture_layer = "conv3".into();
        assert!(spec.check().is_err());
        spec.capture_layer = "relu2".into();
        assert!(spec.check().is_err(), "conv3 follows the capture layer");
        spec.capture_layer = "nope".into();
        assert!(spec.check().is_err());
    }

    #[test]
    fn odd_pool_rejected() {
        let spec = ModelSpec::camnet(1, 30, &CLASSES);
        let e = spec.check().unwrap_err();
        assert_eq!(e.name, "maxpool2");
    }

    #[test]
    fn json_round_trip() {
        let spec = ModelSpec::fcnet(3, 32, &CLASSES);
        let s = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<ModelSpec>(&s).unwrap(), spec);
    }
}
