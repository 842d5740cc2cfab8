use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Sampling ranges for the per-iteration augmentation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformRanges {
    /// Rotation angle drawn from `[-rotation_deg, rotation_deg]`.
    pub rotation_deg: f32,
    pub scale: (f32, f32),
    /// Per-channel additive offset drawn from `[-jitter, jitter]`.
    pub jitter: f32,
    /// Crop side fraction drawn from `[crop_min, 1]`.
    pub crop_min: f32,
}

impl Default for TransformRanges {
    fn default() -> Self {
        Self {
            rotation_deg: 10.0,
            scale: (0.9, 1.1),
            jitter: 0.05,
            crop_min: 0.85,
        }
    }
}

impl TransformRanges {
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            scale: (1.0, 1.0),
            jitter: 0.0,
            crop_min: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.scale;
        if !(lo > 0.5 && hi < 2.0 && lo <= hi) {
            return Err(Error::InvalidArgument(format!("scale interval [{lo}, {hi}] must lie inside (0.5, 2)")));
        }
        if !(self.crop_min > 0.5 && self.crop_min <= 1.0) {
            return Err(Error::InvalidArgument(format!("crop fraction {} must be in (0.5, 1]", self.crop_min)));
        }
        if !(self.rotation_deg >= 0.0 && self.rotation_deg.is_finite()) {
            return Err(Error::InvalidArgument("rotation range must be finite and >= 0".into()));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::InvalidArgument("jitter must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// One sampled transform instance.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformDraw {
    pub angle_deg: f32,
    pub scale: f32,
    pub jitter: Vec<f32>,
    pub crop: f32,
    /// Crop origin as a fraction of the free margin, per axis.
    pub crop_offset: (f32, f32),
}

impl TransformDraw {
    pub fn sample(ranges: &TransformRanges, channels: usize, rng: &mut SplitMix64) -> Self {
        let r = ranges.rotation_deg;
        Self {
            angle_deg: rng.uniform(-r, r),
            scale: rng.uniform(ranges.scale.0, ranges.scale.1),
            jitter: (0..channels).map(|_| rng.uniform(-ranges.jitter, ranges.jitter)).collect(),
            crop: rng.uniform(ranges.crop_min, 1.0),
            crop_offset: (rng.next_f32(), rng.next_f32()),
        }
    }
}

/// Bilinear sample of one plane at `(sy, sx)`; reads outside the image are zero.
fn sample_zero(p: &[f32], h: usize, w: usize, sy: f64, sx: f64) -> f32 {
    let (y0, x0) = (sy.floor(), sx.floor());
    let (fy, fx) = ((sy - y0) as f32, (sx - x0) as f32);
    let at = |y: f64, x: f64| -> f32 {
        if y < 0.0 || x < 0.0 || y >= h as f64 || x >= w as f64 {
            0.0
        } else {
            p[y as usize * w + x as usize]
        }
    };
    let top = at(y0, x0) * (1.0 - fx) + at(y0, x0 + 1.0) * fx;
    let bot = at(y0 + 1.0, x0) * (1.0 - fx) + at(y0 + 1.0, x0 + 1.0) * fx;
    top * (1.0 - fy) + bot * fy
}

/// Rotation by `angle_deg` and zoom by `scale` about the image centre.
pub fn rotate_scale(image: &Tensor, angle_deg: f32, scale: f32) -> Result<Tensor> {
    let draw = TransformDraw {
        angle_deg,
        scale,
        jitter: vec![0.0; image.shape()[0]],
        crop: 1.0,
        crop_offset: (0.0, 0.0),
    };
    apply_transform(image, &draw)
}

/// Applies `draw` as a single resampling: the crop window (resized back to
/// full size, half-pixel centres) is mapped through the inverse rotation and
/// zoom, read with zero fill, and the channel jitter is added.
pub fn apply_transform(image: &Tensor, draw: &TransformDraw) -> Result<Tensor> {
    let [c, h, w] = image.dims::<3>("transform")?;
    if draw.jitter.len() != c {
        return Err(Error::InvalidArgument(format!("{} jitter offsets for {c} channels", draw.jitter.len())));
    }
    let ch = ((draw.crop as f64 * h as f64).round() as usize).clamp(1, h);
    let cw = ((draw.crop as f64 * w as f64).round() as usize).clamp(1, w);
    let oy = ((h - ch) as f32 * draw.crop_offset.0).floor() as usize;
    let ox = ((w - cw) as f32 * draw.crop_offset.1).floor() as usize;
    let crop_axis = |i: usize, out: usize, len: usize, off: usize| -> f64 {
        if len == out {
            return i as f64;
        }
        let src = ((i as f64 + 0.5) * len as f64 / out as f64 - 0.5).clamp(0.0, (len - 1) as f64);
        src + off as f64
    };
    let th = (draw.angle_deg as f64).to_radians();
    let (cos, sin) = (th.cos(), th.sin());
    let s = draw.scale as f64;
    let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
    let coords: Vec<(f64, f64)> = (0..h)
        .flat_map(|y| (0..w).map(move |x| (y, x)))
        .map(|(y, x)| {
            let (dy, dx) = (crop_axis(y, h, ch, oy) - cy, crop_axis(x, w, cw, ox) - cx);
            ((-sin * dx + cos * dy) / s + cy, (cos * dx + sin * dy) / s + cx)
        })
        .collect();
    let d = image.data();
    let mut out = Vec::with_capacity(c * h * w);
    for (k, &j) in draw.jitter.iter().enumerate() {
        let p = &d[k * h * w..][..h * w];
        out.extend(coords.iter().map(|&(sy, sx)| sample_zero(p, h, w, sy, sx) + j));
    }
    Ok(Tensor::new(vec![c, h, w], out)?)
}

/// Samples one transform from `ranges` and applies it.
pub fn random_transform(image: &Tensor, ranges: &TransformRanges, rng: &mut SplitMix64) -> Result<Tensor> {
    ranges.validate()?;
    let draw = TransformDraw::sample(ranges, image.shape()[0], rng);
    apply_transform(image, &draw)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn img(seed: u64) -> Tensor {
        let mut r = SplitMix64::new(seed);
        Tensor::new(vec![2, 9, 12], r.uniform_vec(216, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn degenerate_ranges_are_identity() {
        let x = img(1);
        let mut rng = SplitMix64::new(7);
        let y = random_transform(&x, &TransformRanges::identity(), &mut rng).unwrap();
        for (a, b) in x.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn full_turn_matches_no_turn() {
        let x = img(2);
        let a = rotate_scale(&x, 360.0, 1.0).unwrap();
        let b = rotate_scale(&x, 0.0, 1.0).unwrap();
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| (p - q).abs() <= 1e-4));
    }

    #[test]
    fn quarter_turn_of_square_permutes_pixels() {
        let x = Tensor::new(vec![1, 3, 3], (0..9).map(|v| v as f32).collect()).unwrap();
        let r = rotate_scale(&x, 90.0, 1.0).unwrap();
        // out(y, x) = in(2 − x, y)
        let want = [6.0, 3.0, 0.0, 7.0, 4.0, 1.0, 8.0, 5.0, 2.0];
        assert!(r.data().iter().zip(want).all(|(a, b)| (a - b).abs() < 1e-5), "{:?}", r.data());
    }

    #[test]
    fn deterministic_given_rng_state() {
        let x = img(3);
        let ranges = TransformRanges::default();
        let a = random_transform(&x, &ranges, &mut SplitMix64::new(9)).unwrap();
        let b = random_transform(&x, &ranges, &mut SplitMix64::new(9)).unwrap();
        assert_eq!(a, b);
        let c = random_transform(&x, &ranges, &mut SplitMix64::new(10)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn jitter_only_shifts_channels() {
        let x = img(4);
        let draw = TransformDraw {
            angle_deg: 0.0,
            scale: 1.0,
            jitter: vec![0.25, -0.5],
            crop: 1.0,
            crop_offset: (0.0, 0.0),
        };
        let y = apply_transform(&x, &draw).unwrap();
        for (i, (a, b)) in x.data().iter().zip(y.data()).enumerate() {
            let j = if i < 108 { 0.25 } else { -0.5 };
            assert!((b - a - j).abs() < 1e-6);
        }
    }

    #[test]
    fn invalid_ranges() {
        let bad = [
            TransformRanges {
                scale: (0.5, 1.0),
                ..TransformRanges::default()
            },
            TransformRanges {
                scale: (1.0, 2.0),
                ..TransformRanges::default()
            },
            TransformRanges {
                crop_min: 0.5,
                ..TransformRanges::default()
            },
            TransformRanges {
                crop_min: 1.01,
                ..TransformRanges::default()
            },
        ];
        for r in bad {
            assert!(r.validate().is_err(), "{r:?}");
        }
    }
}
