//! Multiple-instance bags. Only `label` is visible to training; the
//! per-instance truth is kept for evaluation.

use super::LabeledSet;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    /// Instances, each C × P × P.
    pub patches: Vec<Tensor>,
    /// 1.0 when at least one instance is positive.
    pub label: f32,
    /// Grid the patches tile when reassembled into one image, `(rows, cols)`.
    pub grid: (usize, usize),
    /// Evaluation-only ground truth: which instances are positive.
    pub instance_truth: Vec<bool>,
}

/// Row-major grid for `n` patches: square when `n` is a perfect square, one row otherwise.
pub fn grid_for(n: usize) -> (usize, usize) {
    let r = (n as f64).sqrt().round() as usize;
    if r * r == n {
        (r, r)
    } else {
        (1, n)
    }
}

impl Bag {
    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BagConfig {
    pub positive_class: usize,
    pub bag_size: usize,
    pub positive_rate: f64,
    pub seed: u64,
}

/// Builds `count` bags by sampling instances (with replacement) from `source`.
/// Instances whose label for `positive_class` is set are positive. A positive
/// bag holds between one and `max(1, bag_size / 4)` positive instances.
pub fn make_bags(source: &LabeledSet, cfg: &BagConfig, count: usize) -> Result<Vec<Bag>> {
    if cfg.bag_size == 0 {
        return Err(Error::InvalidArgument("bag size must be >= 1".into()));
    }
    if !(cfg.positive_rate > 0.0 && cfg.positive_rate < 1.0) {
        return Err(Error::InvalidArgument("positive rate must be in (0, 1)".into()));
    }
    let (mut pos, mut neg) = (vec![], vec![]);
    for (i, s) in source.samples.iter().enumerate() {
        if cfg.positive_class >= s.labels.len() {
            return Err(Error::InvalidClass {
                index: cfg.positive_class,
                classes: s.labels.len(),
            });
        }
        if s.labels[cfg.positive_class] >= 0.5 {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    if pos.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "source has no instances of class {}",
            cfg.positive_class
        )));
    }
    if neg.is_empty() && cfg.bag_size > 1 {
        return Err(Error::InvalidArgument("source has no negative instances".into()));
    }
    let mut rng = SplitMix64::stream(cfg.seed, 0xBA6);
    let max_pos = (cfg.bag_size / 4).max(1);
    let bags = (0..count)
        .map(|_| {
            let positive = rng.next_f64() < cfg.positive_rate;
            let mut truth = vec![false; cfg.bag_size];
            if positive {
                let k = rng.range_inclusive(1, max_pos);
                let mut slots: Vec<usize> = (0..cfg.bag_size).collect();
                rng.shuffle(&mut slots);
                for &s in &slots[..k] {
                    truth[s] = true;
                }
            }
            let patches = truth
                .iter()
                .map(|&t| {
                    let pool = if t || neg.is_empty() { &pos } else { &neg };
                    source.samples[pool[rng.below(pool.len())]].pixels.clone()
                })
                .collect();
            Bag {
                patches,
                label: positive as u8 as f32,
                grid: grid_for(cfg.bag_size),
                instance_truth: truth,
            }
        })
        .collect();
    Ok(bags)
}
