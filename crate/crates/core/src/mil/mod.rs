//! Attention-based multiple instance learning on image bags: patch
//! shredding, instance embedding, softmax attention pooling, and
//! attention-weighted highlighting of the reassembled image.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::bags::{make_bags, Bag, BagConfig};
use crate::data::shapes::{gen_shapes, ShapesConfig};
use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::nn::{EpochStats, TrainReport};
use crate::par::{self, Exec};
use crate::rng::SplitMix64;
use crate::tensor::{sgd_step, NodeId, ParamSet, Tape, Tensor};

/// Splits a C × H × W image into row-major `patch × patch` tiles.
pub fn shred(image: &Tensor, patch: usize) -> Result<(Vec<Tensor>, (usize, usize))> {
    let [c, h, w] = image.dims::<3>("shred")?;
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::InvalidArgument(format!("{h}×{w} image does not divide into {patch} px patches")));
    }
    let (rows, cols) = (h / patch, w / patch);
    let d = image.data();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for q in 0..cols {
            let mut p = Vec::with_capacity(c * patch * patch);
            for ch in 0..c {
                for y in 0..patch {
                    let row = (ch * h + r * patch + y) * w + q * patch;
                    p.extend_from_slice(&d[row..row + patch]);
                }
            }
            out.push(Tensor::new(vec![c, patch, patch], p)?);
        }
    }
    Ok((out, (rows, cols)))
}

/// Inverse of [`shred`].
pub fn reassemble(patches: &[Tensor], grid: (usize, usize)) -> Result<Tensor> {
    let (rows, cols) = grid;
    if patches.len() != rows * cols || patches.is_empty() {
        return Err(Error::InvalidArgument(format!("{} patches for a {rows}×{cols} grid", patches.len())));
    }
    let [c, ph, pw] = patches[0].dims::<3>("reassemble")?;
    if let Some(bad) = patches.iter().find(|p| p.shape() != patches[0].shape()) {
        return Err(Error::InvalidArgument(format!("patch shape {:?} differs from {:?}", bad.shape(), patches[0].shape())));
    }
    let (h, w) = (rows * ph, cols * pw);
    let mut out = vec![0.0f32; c * h * w];
    for (i, p) in patches.iter().enumerate() {
        let (r, q) = (i / cols, i % cols);
        for ch in 0..c {
            for y in 0..ph {
                let dst = (ch * h + r * ph + y) * w + q * pw;
                out[dst..dst + pw].copy_from_slice(&p.data()[(ch * ph + y) * pw..][..pw]);
            }
        }
    }
    Ok(Tensor::new(vec![c, h, w], out)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmilConfig {
    pub channels: usize,
    /// Instance side in pixels; must be a multiple of 4.
    pub patch: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl AmilConfig {
    pub fn new(channels: usize, patch: usize) -> Self {
        Self {
            channels,
            patch,
            embed: 32,
            hidden: 16,
        }
    }

    fn flat(&self) -> usize {
        16 * (self.patch / 4) * (self.patch / 4)
    }

    fn shapes(&self) -> Vec<(&'static str, Vec<usize>)> {
        let (c, d, h) = (self.channels, self.embed, self.hidden);
        vec![
            ("embed.conv1.weight", vec![8, c, 3, 3]),
            ("embed.conv1.bias", vec![8]),
            ("embed.conv2.weight", vec![16, 8, 3, 3]),
            ("embed.conv2.bias", vec![16]),
            ("embed.linear.weight", vec![d, self.flat()]),
            ("embed.linear.bias", vec![d]),
            ("attention.hidden.weight", vec![h, d]),
            ("attention.hidden.bias", vec![h]),
            ("attention.score.weight", vec![1, h]),
            ("attention.score.bias", vec![1]),
            ("classifier.weight", vec![1, d]),
            ("classifier.bias", vec![1]),
        ]
    }
}

/// Instance embedder (two conv/ReLU/pool stages and a linear+ReLU to `embed`
/// dims), a tanh attention scorer `embed → hidden → 1`, and a sigmoid bag classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct AmilModel {
    config: AmilConfig,
    params: ParamSet,
}

impl AmilModel {
    pub fn build(config: AmilConfig, seed: u64) -> Result<Self> {
        if config.patch == 0 || config.patch % 4 != 0 {
            return Err(Error::InvalidArgument(format!("patch {} must be a positive multiple of 4", config.patch)));
        }
        if config.channels == 0 || config.embed == 0 || config.hidden == 0 {
            return Err(Error::InvalidArgument("channels, embed and hidden must be positive".into()));
        }
        let mut params = ParamSet::new();
        for (i, (name, shape)) in config.shapes().into_iter().enumerate() {
            let t = if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                let fan_in: usize = shape[1..].iter().product();
                let bound = (6.0 / fan_in as f32).sqrt();
                let n = shape.iter().product();
                Tensor::new(shape, SplitMix64::stream(seed, i as u64).uniform_vec(n, -bound, bound))?
            };
            params.insert(name.to_string(), t);
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &AmilConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    /// Config plus every parameter as `{shape, data}`.
    pub fn to_json(&self) -> String {
        let params: BTreeMap<&str, StoredTensor> = self
            .params
            .iter()
            .map(|(k, t)| {
                (
                    k.as_str(),
                    StoredTensor {
                        shape: t.shape().to_vec(),
                        data: t.data().to_vec(),
                    },
                )
            })
            .collect();
        serde_json::json!({"config": self.config, "params": params}).to_string()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Stored {
            config: AmilConfig,
            params: BTreeMap<String, StoredTensor>,
        }
        let stored: Stored = serde_json::from_str(s)?;
        let mut model = Self::build(stored.config, 0)?;
        if stored.params.len() != model.params.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} parameters, found {}",
                model.params.len(),
                stored.params.len()
            )));
        }
        for (name, t) in stored.params {
            let slot = model
                .params
                .get_mut(&name)
                .ok_or_else(|| Error::InvalidArgument(format!("unexpected parameter `{name}`")))?;
            if slot.shape() != t.shape.as_slice() {
                return Err(Error::InvalidArgument(format!("parameter `{name}` has shape {:?}", t.shape)));
            }
            *slot = Tensor::new(t.shape, t.data)?;
        }
        Ok(model)
    }
}

#[derive(Serialize, Deserialize)]
struct StoredTensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

/// Softmax attention over a bag's patches plus the bag score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub weights: Vec<f32>,
    /// `(rows, cols)` of the patch grid.
    pub grid: (usize, usize),
    pub score: f32,
}

impl AttentionMap {
    pub fn argmax(&self) -> usize {
        Tensor::from_vec(self.weights.clone()).argmax()
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "grid": {"rows": self.grid.0, "cols": self.grid.1},
            "weights": self.weights,
            "score": self.score,
        })
        .to_string()
    }
}

#[derive(Debug)]
pub struct AmilForward {
    pub score: f32,
    pub attention: AttentionMap,
    pub tape: Tape,
    /// Bag probability node (1 × 1).
    pub output: NodeId,
    pub params: Vec<(String, NodeId)>,
}

pub fn amil_forward(model: &AmilModel, bag: &Bag) -> Result<AmilForward> {
    if bag.is_empty() {
        return Err(Error::InvalidArgument("empty bag".into()));
    }
    let cfg = &model.config;
    let want = [cfg.channels, cfg.patch, cfg.patch];
    if let Some(bad) = bag.patches.iter().find(|p| p.shape() != want) {
        return Err(Error::InputShape {
            expected: want.to_vec(),
            got: bad.shape().to_vec(),
        });
    }
    let n = bag.len();
    let mut tape = Tape::new();
    let mut ids = Vec::new();
    let mut p = |tape: &mut Tape, name: &str| {
        let id = tape.leaf(model.params[name].clone());
        ids.push((name.to_string(), id));
        id
    };
    let stacked: Vec<f32> = bag.patches.iter().flat_map(|t| t.data().iter().copied()).collect();
    let x = tape.leaf(Tensor::new(vec![n, cfg.channels, cfg.patch, cfg.patch], stacked)?);

    let (k1, b1) = (p(&mut tape, "embed.conv1.weight"), p(&mut tape, "embed.conv1.bias"));
    let c1 = tape.conv2d(x, k1, b1, 1, 1)?;
    let r1 = tape.relu(c1)?;
    let p1 = tape.maxpool2(r1)?;
    let (k2, b2) = (p(&mut tape, "embed.conv2.weight"), p(&mut tape, "embed.conv2.bias"));
    let c2 = tape.conv2d(p1, k2, b2, 1, 1)?;
    let r2 = tape.relu(c2)?;
    let p2 = tape.maxpool2(r2)?;
    let flat = tape.reshape(p2, &[n, cfg.flat()])?;
    let (we, be) = (p(&mut tape, "embed.linear.weight"), p(&mut tape, "embed.linear.bias"));
    let e = tape.linear(flat, we, be)?;
    let h = tape.relu(e)?;

    let (wv, bv) = (p(&mut tape, "attention.hidden.weight"), p(&mut tape, "attention.hidden.bias"));
    let v = tape.linear(h, wv, bv)?;
    let t = tape.tanh(v)?;
    let (wu, bu) = (p(&mut tape, "attention.score.weight"), p(&mut tape, "attention.score.bias"));
    let s = tape.linear(t, wu, bu)?;
    let row = tape.reshape(s, &[1, n])?;
    let a = tape.softmax(row)?;
    let z = tape.matmul(a, h)?;

    let (wc, bc) = (p(&mut tape, "classifier.weight"), p(&mut tape, "classifier.bias"));
    let logit = tape.linear(z, wc, bc)?;
    let out = tape.sigmoid(logit)?;
    let score = tape.value(out).item();
    Ok(AmilForward {
        score,
        attention: AttentionMap {
            weights: tape.value(a).data().to_vec(),
            grid: bag.grid,
            score,
        },
        output: out,
        params: ids,
        tape,
    })
}

/// BCE loss and parameter gradients for one bag. Only `bag.label` is read.
pub fn bag_gradients(model: &AmilModel, bag: &Bag) -> Result<(f32, ParamSet, f32)> {
    let mut f = amil_forward(model, bag)?;
    let loss = f.tape.bce_loss(f.output, Tensor::new(vec![1, 1], vec![bag.label])?)?;
    let wanted: Vec<NodeId> = f.params.iter().map(|(_, id)| *id).collect();
    let mut g = f.tape.backward(loss, &Tensor::scalar(1.0), &wanted)?;
    let grads = f
        .params
        .iter()
        .map(|(name, id)| (name.clone(), g.take(*id).expect("requested")))
        .collect();
    Ok((f.tape.value(loss).item(), grads, f.score))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MilTrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch: usize,
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for MilTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            lr: 0.1,
            batch: 8,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

/// Minibatch SGD on bag-level binary cross-entropy; per-bag gradients run
/// under `cfg.exec` and are reduced in bag order.
pub fn train_mil(model: &mut AmilModel, bags: &[Bag], cfg: &MilTrainConfig) -> Result<TrainReport> {
    if bags.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(cfg.lr >= 0.0) || cfg.batch == 0 {
        return Err(Error::InvalidArgument("lr must be >= 0 and batch >= 1".into()));
    }
    let mut rng = SplitMix64::stream(cfg.seed, 0x3117);
    let mut order: Vec<usize> = (0..bags.len()).collect();
    let mut report = TrainReport {
        classes: vec!["bag".into()],
        epochs: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let (mut loss_sum, mut correct) = (0.0f64, 0usize);
        for chunk in order.chunks(cfg.batch) {
            let snapshot: &AmilModel = model;
            let results = par::map_slice(cfg.exec, chunk, |&i| bag_gradients(snapshot, &bags[i]));
            let mut total: Option<ParamSet> = None;
            for (r, &i) in results.into_iter().zip(chunk) {
                let (loss, grads, score) = r?;
                loss_sum += loss as f64;
                correct += ((score >= 0.5) == (bags[i].label >= 0.5)) as usize;
                match &mut total {
                    None => total = Some(grads),
                    Some(acc) => {
                        for (name, g) in grads {
                            acc.get_mut(&name).expect("same params").add_assign(&g)?;
                        }
                    }
                }
            }
            let scale = 1.0 / chunk.len() as f32;
            let mean: ParamSet = total
                .expect("chunk nonempty")
                .into_iter()
                .map(|(k, v)| (k, v.scale(scale)))
                .collect();
            sgd_step(model.params_mut(), &mean, cfg.lr)?;
        }
        let loss = (loss_sum / bags.len() as f64) as f32;
        if !loss.is_finite() {
            return Err(Error::InvalidArgument(format!("training diverged at epoch {epoch}")));
        }
        report.epochs.push(EpochStats {
            epoch,
            loss,
            class_accuracy: vec![correct as f32 / bags.len() as f32],
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MilEvaluation {
    pub bag_accuracy: f32,
    /// Over positive bags: fraction whose max-attention instance is truly positive.
    pub attention_hit_rate: f32,
    /// Largest `|Σ a_i − 1|` over all bags.
    pub max_weight_sum_error: f32,
    pub bags: usize,
}

/// Scores held-out bags, consulting the instance ground truth for the attention hit rate.
pub fn evaluate_mil(model: &AmilModel, bags: &[Bag], exec: Exec) -> Result<MilEvaluation> {
    if bags.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let maps = par::map_slice(exec, bags, |b| amil_forward(model, b).map(|f| f.attention));
    let (mut correct, mut positives, mut hits, mut worst) = (0usize, 0usize, 0usize, 0.0f32);
    for (m, b) in maps.into_iter().zip(bags) {
        let m = m?;
        correct += ((m.score >= 0.5) == (b.label >= 0.5)) as usize;
        let sum: f64 = m.weights.iter().map(|&w| w as f64).sum();
        worst = worst.max((sum - 1.0).abs() as f32);
        if b.label >= 0.5 {
            positives += 1;
            hits += b.instance_truth[m.argmax()] as usize;
        }
    }
    Ok(MilEvaluation {
        bag_accuracy: correct as f32 / bags.len() as f32,
        attention_hit_rate: if positives == 0 { 0.0 } else { hits as f32 / positives as f32 },
        max_weight_sum_error: worst,
        bags: bags.len(),
    })
}

/// A full bag experiment on shapes instances: build train and held-out bags,
/// train, evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MilExperiment {
    pub train_bags: usize,
    pub test_bags: usize,
    pub bag_size: usize,
    /// Shape class whose presence makes an instance positive.
    pub positive_class: usize,
    pub positive_rate: f64,
    pub patch: usize,
    pub seed: u64,
    pub train: MilTrainConfig,
}

impl Default for MilExperiment {
    fn default() -> Self {
        Self {
            train_bags: 500,
            test_bags: 200,
            bag_size: 9,
            positive_class: 2,
            positive_rate: 0.5,
            patch: 16,
            seed: 0,
            train: MilTrainConfig::default(),
        }
    }
}

/// `count` single-shape `patch`-pixel instances with shapes
/// `3/8` to `5/8` of the side.
pub fn instance_source(count: usize, patch: usize, seed: u64) -> Result<LabeledSet> {
    let mut cfg = ShapesConfig::new(count, seed, 1);
    cfg.side = patch;
    cfg.min_size = (patch * 3 / 8).max(4);
    cfg.max_size = (patch * 5 / 8).max(cfg.min_size);
    Ok(LabeledSet::from_shapes(&gen_shapes(&cfg)?))
}

pub struct MilRun {
    pub model: AmilModel,
    pub report: TrainReport,
    pub evaluation: MilEvaluation,
    pub test_bags: Vec<Bag>,
}

pub fn run_experiment(exp: &MilExperiment) -> Result<MilRun> {
    let pool = (exp.train_bags * exp.bag_size / 4).clamp(64, 2000);
    let bag_cfg = |seed| BagConfig {
        positive_class: exp.positive_class,
        bag_size: exp.bag_size,
        positive_rate: exp.positive_rate,
        seed,
    };
    let train_src = instance_source(pool, exp.patch, SplitMix64::stream(exp.seed, 1).next_u64())?;
    let test_src = instance_source(pool, exp.patch, SplitMix64::stream(exp.seed, 2).next_u64())?;
    let train_bags = make_bags(&train_src, &bag_cfg(SplitMix64::stream(exp.seed, 3).next_u64()), exp.train_bags)?;
    let test_bags = make_bags(&test_src, &bag_cfg(SplitMix64::stream(exp.seed, 4).next_u64()), exp.test_bags)?;
    let mut model = AmilModel::build(AmilConfig::new(1, exp.patch), exp.seed)?;
    let train = MilTrainConfig {
        seed: exp.seed,
        ..exp.train
    };
    let report = train_mil(&mut model, &train_bags, &train)?;
    let evaluation = evaluate_mil(&model, &test_bags, train.exec)?;
    Ok(MilRun {
        model,
        report,
        evaluation,
        test_bags,
    })
}

/// Scales each patch by `a_i / max_j a_j` and reassembles the image.
pub fn highlight(image: &Tensor, attn: &AttentionMap) -> Result<Tensor> {
    let (rows, cols) = attn.grid;
    let [_, h, w] = image.dims::<3>("highlight")?;
    if rows == 0 || cols == 0 || h % rows != 0 || w % cols != 0 || h / rows != w / cols || attn.weights.len() != rows * cols {
        return Err(Error::InvalidArgument(format!(
            "{h}×{w} image does not match a {rows}×{cols} grid of {} weights",
            attn.weights.len()
        )));
    }
    let (patches, grid) = shred(image, h / rows)?;
    let max = attn.weights.iter().copied().fold(0.0f32, f32::max);
    if !(max > 0.0) {
        return Err(Error::InvalidArgument("attention weights are all zero".into()));
    }
    let scaled: Vec<Tensor> = patches
        .iter()
        .zip(&attn.weights)
        .map(|(p, &a)| p.scale(a / max))
        .collect();
    reassemble(&scaled, grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(seed: u64) -> Tensor {
        let mut r = SplitMix64::new(seed);
        Tensor::new(vec![1, 8, 8], r.uniform_vec(64, 0.0, 1.0)).unwrap()
    }

    fn bag(patches: Vec<Tensor>) -> Bag {
        let n = patches.len();
        Bag {
            patches,
            label: 1.0,
            grid: crate::data::bags::grid_for(n),
            instance_truth: vec![false; n],
        }
    }

    fn model() -> AmilModel {
        AmilModel::build(AmilConfig::new(1, 8), 3).unwrap()
    }

    #[test]
    fn shred_layout_and_round_trip() {
        let mut r = SplitMix64::new(1);
        let x = Tensor::new(vec![2, 28, 28], r.uniform_vec(2 * 784, 0.0, 1.0)).unwrap();
        let (p, g) = shred(&x, 14).unwrap();
        assert_eq!((p.len(), g), (4, (2, 2)));
        assert_eq!(reassemble(&p, g).unwrap(), x);
        let (single, g1) = shred(&x, 28).unwrap();
        assert_eq!((single.len(), g1), (1, (1, 1)));
        assert_eq!(single[0], x);
        assert!(shred(&x, 5).is_err());
    }

    #[test]
    fn singleton_bag_has_unit_attention() {
        let f = amil_forward(&model(), &bag(vec![patch(1)])).unwrap();
        assert_eq!(f.attention.weights, vec![1.0]);
    }

    #[test]
    fn duplication_halves_weights() {
        let m = model();
        let ps: Vec<_> = (0..3).map(patch).collect();
        let a = amil_forward(&m, &bag(ps.clone())).unwrap();
        let doubled: Vec<_> = ps.iter().chain(&ps).cloned().collect();
        let b = amil_forward(&m, &bag(doubled)).unwrap();
        assert!((a.score - b.score).abs() <= 1e-5);
        for i in 0..3 {
            assert!((b.attention.weights[i] - a.attention.weights[i] / 2.0).abs() <= 1e-6);
            assert!((b.attention.weights[i + 3] - a.attention.weights[i] / 2.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn empty_bag_rejected() {
        assert!(amil_forward(&model(), &bag(vec![])).is_err());
        assert!(matches!(train_mil(&mut model(), &[], &MilTrainConfig::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn zero_lr_keeps_params_and_runs_are_deterministic() {
        let bags: Vec<_> = (0..6).map(|i| bag(vec![patch(i), patch(i + 10)])).collect();
        let mut m = model();
        let before = m.clone();
        let cfg = MilTrainConfig {
            epochs: 2,
            lr: 0.0,
            batch: 4,
            ..Default::default()
        };
        train_mil(&mut m, &bags, &cfg).unwrap();
        assert_eq!(m, before);
        let cfg = MilTrainConfig { lr: 0.1, ..cfg };
        let (mut a, mut b) = (model(), model());
        let ra = train_mil(&mut a, &bags, &cfg).unwrap();
        let rb = train_mil(&mut b, &bags, &MilTrainConfig { exec: Exec::Sequential, ..cfg }).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }

    #[test]
    fn highlight_rules() {
        let ps: Vec<_> = (0..4).map(patch).collect();
        let img = reassemble(&ps, (2, 2)).unwrap();
        let uniform = AttentionMap {
            weights: vec![0.25; 4],
            grid: (2, 2),
            score: 0.5,
        };
        assert_eq!(highlight(&img, &uniform).unwrap(), img);
        let onehot = AttentionMap {
            weights: vec![0.0, 1.0, 0.0, 0.0],
            ..uniform.clone()
        };
        let out = highlight(&img, &onehot).unwrap();
        let (parts, _) = shred(&out, 8).unwrap();
        assert_eq!(parts[1], ps[1]);
        assert!([0, 2, 3].iter().all(|&i| parts[i].data().iter().all(|&v| v == 0.0)));
        let mixed = AttentionMap {
            weights: vec![0.1, 0.4, 0.3, 0.2],
            ..uniform.clone()
        };
        let out = highlight(&img, &mixed).unwrap();
        assert!(out.data().iter().zip(img.data()).all(|(o, i)| o <= i));
        let wrong = AttentionMap {
            grid: (1, 4),
            ..uniform
        };
        assert!(highlight(&img, &wrong).is_err());
    }

    #[test]
    fn attention_json_fields() {
        let m = AttentionMap {
            weights: vec![0.5, 0.5],
            grid: (1, 2),
            score: 0.75,
        };
        let v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(v["grid"]["cols"], 2);
        assert_eq!(v["score"], 0.75);
    }

    #[test]
    fn json_round_trip() {
        let m = model();
        let back = AmilModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(AmilModel::from_json("{}").is_err());
    }

    #[test]
    fn small_experiment_runs() {
        let exp = MilExperiment {
            train_bags: 8,
            test_bags: 4,
            bag_size: 4,
            patch: 8,
            train: MilTrainConfig {
                epochs: 1,
                ..Default::default()
            },
            ..Default::default()
        };
        let run = run_experiment(&exp).unwrap();
        assert_eq!(run.report.epochs.len(), 1);
        assert_eq!(run.test_bags.len(), 4);
        assert!(run.evaluation.max_weight_sum_error <= 1e-5);
    }
}
