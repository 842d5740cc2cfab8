use std::collections::BTreeMap;

use serde::Serialize;

use super::spec::{HeadKind, Layer, LayerInfo, ModelSpec};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::{NodeId, ParamSet, Tape, Tensor};

/// A model spec plus its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    params: ParamSet,
    infos: Vec<LayerInfo>,
}

/// Per-class scores for one image.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassScores {
    pub logits: Vec<f32>,
    pub confidences: Vec<f32>,
    pub classes: Vec<String>,
    pub head: HeadKind,
}

/// Rectified feature maps of the capture layer and optionally their gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureCapture {
    pub layer: String,
    /// K × H_f × W_f
    pub maps: Tensor,
    pub grads: Option<Tensor>,
}

impl FeatureCapture {
    pub fn channels(&self) -> usize {
        self.maps.shape()[0]
    }

    /// Spatial size `Z = H_f · W_f`.
    pub fn z(&self) -> usize {
        self.maps.shape()[1] * self.maps.shape()[2]
    }
}

/// Result of a forward pass: scores, capture, and the live tape.
#[derive(Debug)]
pub struct Forward {
    pub tape: Tape,
    pub input: NodeId,
    /// Output node of every spec layer, in order.
    pub layers: Vec<NodeId>,
    pub params: BTreeMap<String, NodeId>,
    /// Pre-activation class scores (1 × C).
    pub logits: NodeId,
    /// Sigmoid or softmax output (1 × C).
    pub output: NodeId,
    /// Capture layer output (1 × K × H_f × W_f).
    pub capture_node: NodeId,
    pub scores: ClassScores,
    pub capture: FeatureCapture,
}

impl Forward {
    /// One-hot seed on logit `class`, scaled by `scale`.
    pub fn logit_seed(&self, class: usize, scale: f32) -> Tensor {
        let c = self.scores.logits.len();
        let mut seed = Tensor::zeros(&[1, c]);
        seed.data_mut()[class] = scale;
        seed
    }

    pub fn layer_node(&self, names: &[String], name: &str) -> Option<NodeId> {
        names.iter().position(|n| n == name).map(|i| self.layers[i])
    }
}

impl Model {
    /// Builds a model with parameters drawn from seeded uniform fan-in
    /// initialisation, `U(-√(6/fan_in), √(6/fan_in))`, and zero biases.
    pub fn build(spec: ModelSpec, seed: u64) -> Result<Self> {
        let infos = spec.check()?;
        let mut params = ParamSet::new();
        let mut stream = 0u64;
        for info in &infos {
            for (name, shape) in &info.params {
                let t = if name.ends_with(".bias") {
                    Tensor::zeros(shape)
                } else {
                    let fan_in: usize = shape[1..].iter().product();
                    let bound = (6.0 / fan_in as f32).sqrt();
                    let mut rng = SplitMix64::stream(seed, stream);
                    let n = shape.iter().product();
                    Tensor::new(shape.clone(), rng.uniform_vec(n, -bound, bound))?
                };
                stream += 1;
                params.insert(name.clone(), t);
            }
        }
        Ok(Self { spec, params, infos })
    }

    /// Assembles a model from a spec and an explicit parameter set.
    pub fn from_parts(spec: ModelSpec, params: ParamSet) -> Result<Self> {
        let infos = spec.check()?;
        let expected: BTreeMap<&str, &Vec<usize>> = infos
            .iter()
            .flat_map(|i| i.params.iter().map(|(n, s)| (n.as_str(), s)))
            .collect();
        if expected.len() != params.len() {
            return Err(Error::InvalidArgument(format!(
                "spec declares {} parameters, got {}",
                expected.len(),
                params.len()
            )));
        }
        for (name, shape) in &expected {
            let p = params
                .get(*name)
                .ok_or_else(|| Error::InvalidArgument(format!("missing parameter `{name}`")))?;
            if p.shape() != shape.as_slice() {
                return Err(Error::InvalidArgument(format!(
                    "parameter `{name}` has shape {:?}, spec needs {:?}",
                    p.shape(),
                    shape
                )));
            }
        }
        Ok(Self { spec, params, infos })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn spec_mut(&mut self) -> &mut ModelSpec {
        &mut self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn layer_infos(&self) -> &[LayerInfo] {
        &self.infos
    }

    pub fn layer_names(&self) -> Vec<String> {
        self.infos.iter().map(|i| i.name.clone()).collect()
    }

    pub fn num_classes(&self) -> usize {
        self.spec.classes.len()
    }

    pub fn check_class(&self, class: usize) -> Result<()> {
        if class < self.num_classes() {
            Ok(())
        } else {
            Err(Error::InvalidClass {
                index: class,
                classes: self.num_classes(),
            })
        }
    }

    pub fn forward(&self, image: &Tensor) -> Result<Forward> {
        let expected = self.spec.input.to_vec();
        if image.shape() != expected.as_slice() {
            return Err(Error::InputShape {
                expected,
                got: image.shape().to_vec(),
            });
        }
        let [c, h, w] = self.spec.input;
        let mut tape = Tape::new();
        let input = tape.leaf(image.clone().reshape(&[1, c, h, w])?);
        let mut param_nodes = BTreeMap::new();
        let mut layers = Vec::with_capacity(self.infos.len());
        let mut cur = input;
        let mut logits = None;
        for info in &self.infos {
            cur = match info.layer {
                Layer::Conv { stride, pad, .. } => {
                    let (k, b) = self.param_leaves(&mut tape, &mut param_nodes, info);
                    tape.conv2d(cur, k, b, stride, pad)?
                }
                Layer::Relu => tape.relu(cur)?,
                Layer::Maxpool2 => tape.maxpool2(cur)?,
                Layer::Gap => tape.gap(cur)?,
                Layer::Flatten => {
                    let n: usize = tape.value(cur).len();
                    tape.reshape(cur, &[1, n])?
                }
                Layer::Linear { .. } => {
                    let (wt, b) = self.param_leaves(&mut tape, &mut param_nodes, info);
                    let y = tape.linear(cur, wt, b)?;
                    logits = Some(y);
                    y
                }
                Layer::Sigmoid => tape.sigmoid(cur)?,
                Layer::Softmax => tape.softmax(cur)?,
            };
            layers.push(cur);
        }
        let cap_idx = self.spec.capture_index().expect("spec checked at build");
        let capture_node = layers[cap_idx];
        let logits = logits.expect("spec checked at build");
        let cap_val = tape.value(capture_node);
        let maps = cap_val.clone().reshape(&cap_val.shape()[1..])?;
        let scores = ClassScores {
            logits: tape.value(logits).data().to_vec(),
            confidences: tape.value(cur).data().to_vec(),
            classes: self.spec.classes.clone(),
            head: self.spec.head(),
        };
        Ok(Forward {
            input,
            layers,
            params: param_nodes,
            logits,
            output: cur,
            capture_node,
            scores,
            capture: FeatureCapture {
                layer: self.spec.capture_layer.clone(),
                maps,
                grads: None,
            },
            tape,
        })
    }

    pub fn predict(&self, image: &Tensor) -> Result<ClassScores> {
        Ok(self.forward(image)?.scores)
    }

    fn param_leaves(&self, tape: &mut Tape, nodes: &mut BTreeMap<String, NodeId>, info: &LayerInfo) -> (NodeId, NodeId) {
        let mut ids = info.params.iter().map(|(name, _)| {
            let id = tape.leaf(self.params[name].clone());
            nodes.insert(name.clone(), id);
            id
        });
        let w = ids.next().expect("layer has weight");
        let b = ids.next().expect("layer has bias");
        (w, b)
    }
}

/// The `k` highest-confidence classes, descending; ties go to the lower index.
pub fn top_k(scores: &ClassScores, k: usize) -> Result<Vec<(String, f32)>> {
    let c = scores.confidences.len();
    if k == 0 || k > c {
        return Err(Error::InvalidArgument(format!("k must be in 1..={c}, got {k}")));
    }
    let mut idx: Vec<usize> = (0..c).collect();
    idx.sort_by(|&a, &b| {
        scores.confidences[b]
            .partial_cmp(&scores.confidences[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(idx
        .into_iter()
        .take(k)
        .map(|i| (scores.classes[i].clone(), scores.confidences[i]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLASSES: [&str; 3] = ["square", "circle", "cross"];

    fn scores(conf: &[f32]) -> ClassScores {
        ClassScores {
            logits: conf.to_vec(),
            confidences: conf.to_vec(),
            classes: CLASSES.iter().map(|s| s.to_string()).collect(),
            head: HeadKind::MultiLabel,
        }
    }

    #[test]
    fn build_is_deterministic() {
        let a = Model::build(ModelSpec::camnet(1, 32, &CLASSES), 7).unwrap();
        let b = Model::build(ModelSpec::camnet(1, 32, &CLASSES), 7).unwrap();
        assert_eq!(a.params(), b.params());
        let c = Model::build(ModelSpec::camnet(1, 32, &CLASSES), 8).unwrap();
        assert_ne!(a.params(), c.params());
        assert_eq!(a.params()["linear1.weight"].shape(), &[3, 16]);
    }

    #[test]
    fn dead_network_emits_bias() {
        let mut m = Model::build(ModelSpec::camnet(1, 32, &CLASSES), 1).unwrap();
        *m.params_mut().get_mut("linear1.weight").unwrap() = Tensor::zeros(&[3, 16]);
        let bias = Tensor::new(vec![3], vec![0.5, -1.0, 2.0]).unwrap();
        *m.params_mut().get_mut("linear1.bias").unwrap() = bias.clone();
        let s = m.predict(&Tensor::zeros(&[1, 32, 32])).unwrap();
        assert_eq!(s.logits, bias.data());
    }

    #[test]
    fn captured_maps_are_nonnegative() {
        let m = Model::build(ModelSpec::fcnet(1, 32, &CLASSES), 3).unwrap();
        let mut rng = SplitMix64::new(11);
        let img = Tensor::new(vec![1, 32, 32], rng.uniform_vec(1024, -1.0, 1.0)).unwrap();
        let f = m.forward(&img).unwrap();
        assert_eq!(f.capture.maps.shape(), &[16, 8, 8]);
        assert!(f.capture.maps.data().iter().all(|&v| v >= 0.0));
        assert!(f.scores.confidences.iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn wrong_input_shape() {
        let m = Model::build(ModelSpec::camnet(1, 32, &CLASSES), 3).unwrap();
        assert!(matches!(m.forward(&Tensor::zeros(&[3, 32, 32])), Err(Error::InputShape { .. })));
    }

    #[test]
    fn top_k_rules() {
        let all = top_k(&scores(&[0.3, 0.1, 0.5]), 3).unwrap();
        let mut names: Vec<_> = all.iter().map(|(n, _)| n.clone()).collect();
        names.sort();
        assert_eq!(names, vec!["circle", "cross", "square"]);
        let tie = top_k(&scores(&[0.2, 0.9, 0.9]), 2).unwrap();
        assert_eq!(tie[0].0, "circle");
        assert_eq!(tie[1].0, "cross");
        let one = top_k(&scores(&[0.1, 0.8, 0.3]), 1).unwrap();
        assert_eq!(one[0].0, "circle");
        assert!(top_k(&scores(&[0.1, 0.8, 0.3]), 0).is_err());
        assert!(top_k(&scores(&[0.1, 0.8, 0.3]), 4).is_err());
    }

    #[test]
    fn softmax_head_rows_sum_to_one() {
        let mut spec = ModelSpec::camnet(1, 32, &CLASSES);
        *spec.layers.last_mut().unwrap() = Layer::Softmax;
        let m = Model::build(spec, 5).unwrap();
        let mut rng = SplitMix64::new(2);
        let img = Tensor::new(vec![1, 32, 32], rng.uniform_vec(1024, 0.0, 1.0)).unwrap();
        let s = m.predict(&img).unwrap();
        assert_eq!(s.head, HeadKind::SingleLabel);
        assert!((s.confidences.iter().sum::<f32>() - 1.0).abs() < 1e-5);
    }
}
