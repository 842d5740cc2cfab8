use serde::{Deserialize, Serialize};

use super::model::Model;
use crate::data::LabeledSet;
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rng::SplitMix64;
use crate::tensor::{sgd_step, ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch: usize,
    pub seed: u64,
    #[serde(default)]
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 0.2,
            batch: 8,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f32,
    pub class_accuracy: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub classes: Vec<String>,
    pub epochs: Vec<EpochStats>,
}

impl TrainReport {
    /// `epoch,loss,acc_<class>...` with one row per epoch.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss");
        for c in &self.classes {
            s.push_str(&format!(",acc_{c}"));
        }
        s.push('\n');
        for e in &self.epochs {
            s.push_str(&format!("{},{}", e.epoch, e.loss));
            for a in &e.class_accuracy {
                s.push_str(&format!(",{a}"));
            }
            s.push('\n');
        }
        s
    }
}

/// Loss, parameter gradients and confidences for a single labelled image.
pub fn sample_gradients(model: &Model, pixels: &Tensor, labels: &[f32]) -> Result<(f32, ParamSet, Vec<f32>)> {
    let mut f = model.forward(pixels)?;
    let targets = Tensor::new(vec![1, labels.len()], labels.to_vec())?;
    let loss = f.tape.bce_loss(f.output, targets)?;
    let wanted: Vec<_> = f.params.values().copied().collect();
    let mut grads = f.tape.backward(loss, &Tensor::scalar(1.0), &wanted)?;
    let named = f
        .params
        .iter()
        .map(|(name, id)| (name.clone(), grads.take(*id).expect("requested")))
        .collect();
    Ok((f.tape.value(loss).item(), named, f.scores.confidences))
}

fn check_dataset(model: &Model, data: &LabeledSet) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let c = model.num_classes();
    if let Some(bad) = data.samples.iter().find(|s| s.labels.len() != c) {
        return Err(Error::InvalidArgument(format!(
            "label vector has {} entries, model has {c} classes",
            bad.labels.len()
        )));
    }
    Ok(())
}

fn hits(conf: &[f32], labels: &[f32], counts: &mut [usize]) {
    for ((&p, &t), n) in conf.iter().zip(labels).zip(counts.iter_mut()) {
        if (p >= 0.5) == (t >= 0.5) {
            *n += 1;
        }
    }
}

/// Minibatch SGD on mean per-class binary cross-entropy. Per-sample
/// gradients are computed under `cfg.exec` and summed in sample order, so
/// the result does not depend on the execution mode.
pub fn train(model: &mut Model, data: &LabeledSet, cfg: &TrainConfig) -> Result<TrainReport> {
    check_dataset(model, data)?;
    if !(cfg.lr >= 0.0) || cfg.batch == 0 {
        return Err(Error::InvalidArgument("lr must be >= 0 and batch >= 1".into()));
    }
    model.spec_mut().pixel_mean = data.pixel_mean();
    let c = model.num_classes();
    let mut rng = SplitMix64::stream(cfg.seed, 0x7a11);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport {
        classes: model.spec().classes.clone(),
        epochs: Vec::with_capacity(cfg.epochs),
    };
    for epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0f64;
        let mut correct = vec![0usize; c];
        for chunk in order.chunks(cfg.batch) {
            let snapshot: &Model = model;
            let results = par::map_slice(cfg.exec, chunk, |&i| {
                let s = &data.samples[i];
                sample_gradients(snapshot, &s.pixels, &s.labels)
            });
            let mut total: Option<ParamSet> = None;
            for (r, &i) in results.into_iter().zip(chunk) {
                let (loss, grads, conf) = r?;
                loss_sum += loss as f64;
                hits(&conf, &data.samples[i].labels, &mut correct);
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
        let loss = (loss_sum / data.len() as f64) as f32;
        if !loss.is_finite() {
            return Err(Error::InvalidArgument(format!("training diverged at epoch {epoch}")));
        }
        report.epochs.push(EpochStats {
            epoch,
            loss,
            class_accuracy: correct.iter().map(|&n| n as f32 / data.len() as f32).collect(),
        });
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub loss: f32,
    /// Fraction of images whose thresholded confidence (0.5) matches the label, per class.
    pub class_accuracy: Vec<f32>,
    /// Fraction of images where the top-1 class is one of the true labels.
    pub top1_hit: f32,
}

pub fn evaluate(model: &Model, data: &LabeledSet, exec: Exec) -> Result<Evaluation> {
    check_dataset(model, data)?;
    let c = model.num_classes();
    let results = par::map_slice(exec, &data.samples, |s| -> Result<(f32, Vec<f32>)> {
        let f = model.forward(&s.pixels)?;
        let targets = Tensor::new(vec![1, c], s.labels.clone())?;
        let loss = crate::tensor::ops::bce_loss(f.tape.value(f.output), &targets)?.item();
        Ok((loss, f.scores.confidences))
    });
    let mut loss = 0.0f64;
    let mut correct = vec![0usize; c];
    let mut top1 = 0usize;
    for (r, s) in results.into_iter().zip(&data.samples) {
        let (l, conf) = r?;
        loss += l as f64;
        hits(&conf, &s.labels, &mut correct);
        let best = Tensor::from_vec(conf).argmax();
        if s.labels[best] >= 0.5 {
            top1 += 1;
        }
    }
    let n = data.len() as f32;
    Ok(Evaluation {
        loss: (loss / data.len() as f64) as f32,
        class_accuracy: correct.iter().map(|&k| k as f32 / n).collect(),
        top1_hit: top1 as f32 / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::shapes::{gen_shapes, ShapesConfig};
    use crate::nn::ModelSpec;

    fn tiny_set(n: usize, seed: u64) -> LabeledSet {
        LabeledSet::from_shapes(&gen_shapes(&ShapesConfig::new(n, seed, 1)).unwrap())
    }

    #[test]
    fn zero_lr_keeps_params() {
        let data = tiny_set(8, 1);
        let mut m = Model::build(ModelSpec::camnet(1, 32, &crate::data::shapes::CLASS_NAMES), 4).unwrap();
        let before = m.params().clone();
        let cfg = TrainConfig {
            epochs: 1,
            lr: 0.0,
            batch: 4,
            seed: 1,
            exec: Exec::Sequential,
        };
        train(&mut m, &data, &cfg).unwrap();
        assert_eq!(m.params(), &before);
    }

    #[test]
    fn empty_dataset_errors() {
        let mut m = Model::build(ModelSpec::camnet(1, 32, &crate::data::shapes::CLASS_NAMES), 4).unwrap();
        let empty = LabeledSet::default();
        assert!(matches!(train(&mut m, &empty, &TrainConfig::default()), Err(Error::EmptyDataset)));
    }

    #[test]
    fn exec_modes_are_bit_identical() {
        let data = tiny_set(12, 5);
        let spec = ModelSpec::camnet(1, 32, &crate::data::shapes::CLASS_NAMES);
        let mut a = Model::build(spec.clone(), 9).unwrap();
        let mut b = Model::build(spec, 9).unwrap();
        let mut cfg = TrainConfig {
            epochs: 2,
            lr: 0.05,
            batch: 4,
            seed: 3,
            exec: Exec::Sequential,
        };
        let ra = train(&mut a, &data, &cfg).unwrap();
        cfg.exec = Exec::Parallel;
        let rb = train(&mut b, &data, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn report_csv_layout() {
        let r = TrainReport {
            classes: vec!["a".into(), "b".into()],
            epochs: vec![EpochStats {
                epoch: 0,
                loss: 0.5,
                class_accuracy: vec![1.0, 0.25],
            }],
        };
        assert_eq!(r.to_csv(), "epoch,loss,acc_a,acc_b\n0,0.5,1,0.25\n");
    }
}
