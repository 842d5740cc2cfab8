//! Class impressions: images synthesised from noise by gradient ascent on
//! one class logit, under random per-iteration transforms and a
//! total-variation smoothness prior.

mod transform;

pub use transform::{apply_transform, random_transform, rotate_scale, TransformDraw, TransformRanges};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Model;
use crate::rng::SplitMix64;
use crate::saliency::input_gradient;
use crate::tensor::{ReluRule, Tensor};

/// Squared-difference total variation over vertical and horizontal
/// neighbours, summed over channels, with its analytic gradient.
pub fn tv_loss(image: &Tensor) -> Result<(f32, Tensor)> {
    let [c, h, w] = image.dims::<3>("tv_loss")?;
    if h < 2 || w < 2 {
        return Err(Error::InvalidArgument(format!("tv needs H, W >= 2, got {h}×{w}")));
    }
    let d = image.data();
    let mut grad = vec![0.0f32; d.len()];
    let mut tv = 0.0f64;
    for ch in 0..c {
        let base = ch * h * w;
        for y in 0..h {
            for x in 0..w {
                let i = base + y * w + x;
                if y + 1 < h {
                    let diff = d[i + w] - d[i];
                    tv += (diff * diff) as f64;
                    grad[i + w] += 2.0 * diff;
                    grad[i] -= 2.0 * diff;
                }
                if x + 1 < w {
                    let diff = d[i + 1] - d[i];
                    tv += (diff * diff) as f64;
                    grad[i + 1] += 2.0 * diff;
                    grad[i] -= 2.0 * diff;
                }
            }
        }
    }
    Ok((tv as f32, Tensor::new(vec![c, h, w], grad)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImpressionConfig {
    pub iterations: usize,
    /// Ascent step η.
    pub step: f32,
    /// TV weight λ.
    pub tv_weight: f32,
    pub transforms: TransformRanges,
    /// Initial pixels are uniform in `init_center ± init_half_width`.
    pub init_center: f32,
    pub init_half_width: f32,
    pub seed: u64,
}

impl Default for ImpressionConfig {
    fn default() -> Self {
        Self {
            iterations: 300,
            step: 1.0,
            tv_weight: 1e-3,
            transforms: TransformRanges::default(),
            init_center: 0.5,
            init_half_width: 0.1,
            seed: 0,
        }
    }
}

impl ImpressionConfig {
    pub fn validate(&self) -> Result<()> {
        self.transforms.validate()?;
        if !(self.tv_weight >= 0.0 && self.tv_weight.is_finite()) {
            return Err(Error::InvalidArgument(format!("tv weight must be >= 0, got {}", self.tv_weight)));
        }
        if !self.step.is_finite() {
            return Err(Error::InvalidArgument("step must be finite".into()));
        }
        if !(self.init_half_width >= 0.0 && self.init_center.is_finite() && self.init_half_width.is_finite()) {
            return Err(Error::InvalidArgument("init distribution must be finite with half-width >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpressionTrace {
    pub class: usize,
    /// Target logit of the transformed iterate, one per iteration.
    pub logits: Vec<f32>,
    /// TV of the transformed iterate, one per iteration.
    pub tv: Vec<f32>,
    /// Final image, clamped to `[0, 1]`.
    pub image: Tensor,
    pub initial_logit: f32,
    pub final_logit: f32,
    pub final_confidence: f32,
}

impl ImpressionTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,logit,tv\n");
        for (i, (l, t)) in self.logits.iter().zip(&self.tv).enumerate() {
            s.push_str(&format!("{i},{l},{t}\n"));
        }
        s
    }
}

/// Trailing moving average with a full window; empty when shorter than `window`.
pub fn smoothed(values: &[f32], window: usize) -> Vec<f32> {
    if window == 0 || values.len() < window {
        return Vec::new();
    }
    values
        .windows(window)
        .map(|w| (w.iter().map(|&v| v as f64).sum::<f64>() / window as f64) as f32)
        .collect()
}

/// The initial noise image for `cfg` on `model`.
pub fn initial_image(model: &Model, cfg: &ImpressionConfig) -> Result<Tensor> {
    let shape = model.spec().input;
    let n = shape.iter().product();
    let mut rng = SplitMix64::stream(cfg.seed, 0);
    let (lo, hi) = (cfg.init_center - cfg.init_half_width, cfg.init_center + cfg.init_half_width);
    Ok(Tensor::new(shape.to_vec(), rng.uniform_vec(n, lo, hi))?.map(|v| v.clamp(0.0, 1.0)))
}

/// `clamp(x + η·(∂y^c/∂x − λ·∂tv/∂x), 0, 1)` with the logit and TV at `x`.
pub fn ascent_step(model: &Model, x: &Tensor, class: usize, step: f32, tv_weight: f32) -> Result<(Tensor, f32, f32)> {
    let logit = model.predict(x)?.logits[class];
    let g = input_gradient(model, x, class, ReluRule::Standard, None)?;
    let (tv, tv_grad) = tv_loss(x)?;
    let data = x
        .data()
        .iter()
        .zip(g.data())
        .zip(tv_grad.data())
        .map(|((&v, &gl), &gt)| (v + step * (gl - tv_weight * gt)).clamp(0.0, 1.0))
        .collect();
    Ok((Tensor::new(x.shape().to_vec(), data)?, logit, tv))
}

/// Gradient ascent from noise. Each iteration samples a fresh transform,
/// applies it, and takes the ascent step on the transformed image, which
/// becomes the next iterate.
pub fn impress(model: &Model, class: usize, cfg: &ImpressionConfig) -> Result<ImpressionTrace> {
    impress_with_progress(model, class, cfg, |_, _| {})
}

/// [`impress`] with a callback after each iteration `(iteration, logit)`.
pub fn impress_with_progress(
    model: &Model,
    class: usize,
    cfg: &ImpressionConfig,
    mut progress: impl FnMut(usize, f32),
) -> Result<ImpressionTrace> {
    model.check_class(class)?;
    cfg.validate()?;
    let mut x = initial_image(model, cfg)?;
    let initial_logit = model.predict(&x)?.logits[class];
    let mut rng = SplitMix64::stream(cfg.seed, 1);
    let mut logits = Vec::with_capacity(cfg.iterations);
    let mut tvs = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let xt = random_transform(&x, &cfg.transforms, &mut rng)?;
        let (next, logit, tv) = ascent_step(model, &xt, class, cfg.step, cfg.tv_weight)?;
        if !logit.is_finite() || !tv.is_finite() {
            return Err(Error::InvalidArgument(format!("non-finite trace at iteration {it}")));
        }
        logits.push(logit);
        tvs.push(tv);
        x = next;
        progress(it, logit);
    }
    let fin = model.predict(&x)?;
    Ok(ImpressionTrace {
        class,
        logits,
        tv: tvs,
        initial_logit,
        final_logit: fin.logits[class],
        final_confidence: fin.confidences[class],
        image: x,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelSpec;

    #[test]
    fn tv_examples() {
        assert_eq!(tv_loss(&Tensor::full(&[2, 4, 5], 0.3)).unwrap().0, 0.0);
        let checker = Tensor::new(vec![1, 2, 2], vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(tv_loss(&checker).unwrap().0, 4.0);
        let mut r = SplitMix64::new(1);
        let x = Tensor::new(vec![1, 4, 4], r.uniform_vec(16, 0.0, 1.0)).unwrap();
        let a = tv_loss(&x).unwrap().0;
        let b = tv_loss(&x.scale(3.0)).unwrap().0;
        assert!((b - 9.0 * a).abs() <= 1e-5 * b);
        assert!(tv_loss(&Tensor::zeros(&[1, 1, 4])).is_err());
    }

    #[test]
    fn tv_gradient_matches_central_differences() {
        let mut r = SplitMix64::new(2);
        let x = Tensor::new(vec![2, 5, 4], r.uniform_vec(40, 0.0, 1.0)).unwrap();
        let (_, g) = tv_loss(&x).unwrap();
        let h = 1e-2f32;
        for i in 0..x.len() {
            let mut p = x.clone();
            p.data_mut()[i] += h;
            let mut m = x.clone();
            m.data_mut()[i] -= h;
            let fd = (tv_loss(&p).unwrap().0 - tv_loss(&m).unwrap().0) / (2.0 * h);
            let an = g.data()[i];
            assert!((fd - an).abs() <= 1e-3 || (fd - an).abs() <= 1e-2 * an.abs(), "{i}: {fd} vs {an}");
        }
    }

    fn model() -> Model {
        Model::build(ModelSpec::camnet(1, 32, &["a", "b", "c"]), 3).unwrap()
    }

    #[test]
    fn zero_iterations_keep_noise() {
        let m = model();
        let cfg = ImpressionConfig {
            iterations: 0,
            ..Default::default()
        };
        let t = impress(&m, 0, &cfg).unwrap();
        assert_eq!(t.image, initial_image(&m, &cfg).unwrap());
        assert!(t.logits.is_empty());
        assert!(t.image.data().iter().all(|v| (0.4..=0.6).contains(v)));
    }

    #[test]
    fn one_identity_iteration_is_plain_ascent() {
        let m = model();
        let cfg = ImpressionConfig {
            iterations: 1,
            tv_weight: 0.0,
            step: 0.5,
            transforms: TransformRanges::identity(),
            ..Default::default()
        };
        let t = impress(&m, 2, &cfg).unwrap();
        let x0 = initial_image(&m, &cfg).unwrap();
        let g = input_gradient(&m, &x0, 2, ReluRule::Standard, None).unwrap();
        let want: Vec<f32> = x0.data().iter().zip(g.data()).map(|(x, g)| (x + 0.5 * g).clamp(0.0, 1.0)).collect();
        assert_eq!(t.image.data(), &want[..]);
    }

    #[test]
    fn trace_shape_bounds_and_csv() {
        let m = model();
        let cfg = ImpressionConfig {
            iterations: 12,
            ..Default::default()
        };
        let t = impress(&m, 1, &cfg).unwrap();
        assert_eq!((t.logits.len(), t.tv.len()), (12, 12));
        assert!(t.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
        let csv = t.to_csv();
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.starts_with("iteration,logit,tv\n0,"));
        assert_eq!(t, impress(&m, 1, &cfg).unwrap());
    }

    #[test]
    fn invalid_class_and_config() {
        let m = model();
        assert!(impress(&m, 3, &ImpressionConfig::default()).is_err());
        let cfg = ImpressionConfig {
            tv_weight: -1.0,
            ..Default::default()
        };
        assert!(impress(&m, 0, &cfg).is_err());
    }

    #[test]
    fn moving_average() {
        assert_eq!(smoothed(&[1.0, 2.0, 3.0, 4.0], 2), vec![1.5, 2.5, 3.5]);
        assert!(smoothed(&[1.0], 2).is_empty());
    }
}
