//! Heatmap post-processing and image output: normalisation, bilinear
//! resampling, colour mapping, overlay blending, tiling and codecs.

pub mod codec;
mod colormap;

pub use codec::{decode_any, decode_png, decode_pnm, encode_png, encode_pnm, encode_ppm, CodecError, Pixmap};
pub use colormap::{colorize, ColorMap};

use crate::error::{Error, Result};
use crate::saliency::{Heatmap, NormState, Resolution};
use crate::tensor::Tensor;

/// Maps with a maximum below this are treated as all-zero.
pub const DEGENERATE_EPS: f32 = 1e-12;

/// 8-bit RGB raster, row-major, interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::InvalidArgument(format!(
                "rgb buffer has {} bytes, {}×{} needs {}",
                data.len(),
                width,
                height,
                3 * width * height
            )));
        }
        Ok(Self { width, height, data })
    }
}

/// Divides by the maximum. Maps whose maximum is below [`DEGENERATE_EPS`]
/// become all-zero with the degenerate flag set.
pub fn normalize(map: &Heatmap) -> Heatmap {
    let max = map.grid.max();
    let mut out = map.clone();
    if !(max >= DEGENERATE_EPS) {
        out.grid = Tensor::zeros(map.grid.shape());
        out.state = NormState::UnitRange { degenerate: true };
    } else {
        out.grid = map.grid.map(|v| (v / max).min(1.0));
        out.state = NormState::UnitRange { degenerate: false };
    }
    out
}

/// Bilinear resampling of a C × H × W tensor, half-pixel centres
/// (`src = (i + 0.5)·in/out − 0.5`), edge-clamped.
pub fn resize_bilinear(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let [c, h, w] = t.dims::<3>("resize_bilinear")?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument("output dims must be positive".into()));
    }
    let axis = |o: usize, n: usize, i: usize| -> (usize, usize, f32) {
        let src = ((i as f64 + 0.5) * n as f64 / o as f64 - 0.5).clamp(0.0, (n - 1) as f64);
        let lo = src.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, (src - lo as f64) as f32)
    };
    let ys: Vec<_> = (0..out_h).map(|i| axis(out_h, h, i)).collect();
    let xs: Vec<_> = (0..out_w).map(|i| axis(out_w, w, i)).collect();
    let d = t.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let p = &d[ch * h * w..][..h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = p[y0 * w + x0] * (1.0 - fx) + p[y0 * w + x1] * fx;
                let bot = p[y1 * w + x0] * (1.0 - fx) + p[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Ok(Tensor::new(vec![c, out_h, out_w], out)?)
}

/// Lifts a heatmap to `out_h × out_w` (each at least the map's size).
pub fn upsample_bilinear(map: &Heatmap, out_h: usize, out_w: usize) -> Result<Heatmap> {
    if out_h < map.height() || out_w < map.width() {
        return Err(Error::InvalidArgument(format!(
            "upsample target {out_h}×{out_w} smaller than map {}×{}",
            map.height(),
            map.width()
        )));
    }
    let g = map.grid.clone().reshape(&[1, map.height(), map.width()])?;
    let up = resize_bilinear(&g, out_h, out_w)?.reshape(&[out_h, out_w])?;
    let mut out = map.clone();
    out.grid = up.map(|v| v.max(0.0));
    out.resolution = Resolution::Input;
    Ok(out)
}

/// `round((1 − alpha)·base + alpha·heat)` per channel.
pub fn overlay(base: &RgbImage, heat: &RgbImage, alpha: f32) -> Result<RgbImage> {
    if base.width != heat.width || base.height != heat.height {
        return Err(Error::InvalidArgument(format!(
            "overlay size mismatch: {}×{} vs {}×{}",
            base.width, base.height, heat.width, heat.height
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let data = base
        .data
        .iter()
        .zip(&heat.data)
        .map(|(&b, &h)| ((1.0 - alpha) * b as f32 + alpha * h as f32).round() as u8)
        .collect();
    Ok(RgbImage {
        width: base.width,
        height: base.height,
        data,
    })
}

/// C × H × W tensor in `[0, 1]` (C = 1 or 3) to an 8-bit pixmap.
pub fn tensor_to_pixmap(t: &Tensor) -> Result<Pixmap> {
    let [c, h, w] = t.dims::<3>("tensor_to_pixmap")?;
    if c != 1 && c != 3 {
        return Err(Error::InvalidArgument(format!("cannot encode {c} channels")));
    }
    let d = t.data();
    let mut data = Vec::with_capacity(c * h * w);
    for i in 0..h * w {
        for ch in 0..c {
            data.push(to_u8(d[ch * h * w + i]));
        }
    }
    Ok(Pixmap::new(w, h, c, data)?)
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn tensor_to_rgb(t: &Tensor) -> Result<RgbImage> {
    Ok(tensor_to_pixmap(t)?.to_rgb())
}

/// Pixmap to a `channels` × H × W tensor in `[0, 1]`. RGB to gray uses the channel mean.
pub fn pixmap_to_tensor(img: &Pixmap, channels: usize) -> Result<Tensor> {
    let (w, h) = (img.width, img.height);
    let mut out = vec![0.0f32; channels * h * w];
    for i in 0..h * w {
        let px = &img.data[i * img.channels..][..img.channels];
        for ch in 0..channels {
            let v = match (img.channels, channels) {
                (1, _) => px[0] as f32,
                (3, 1) => (px[0] as f32 + px[1] as f32 + px[2] as f32) / 3.0,
                (3, 3) => px[ch] as f32,
                (a, b) => return Err(Error::InvalidArgument(format!("cannot convert {a} to {b} channels"))),
            };
            out[ch * h * w + i] = v / 255.0;
        }
    }
    Ok(Tensor::new(vec![channels, h, w], out)?)
}

/// Fits `img` inside `channels × side_h × side_w` preserving aspect ratio
/// (bilinear resize, no crop), centred, padding with `fill`.
pub fn letterbox(img: &Pixmap, channels: usize, side_h: usize, side_w: usize, fill: f32) -> Result<Tensor> {
    let t = pixmap_to_tensor(img, channels)?;
    if img.width == side_w && img.height == side_h {
        return Ok(t);
    }
    let s = (side_h as f64 / img.height as f64).min(side_w as f64 / img.width as f64);
    let nh = ((img.height as f64 * s).round() as usize).clamp(1, side_h);
    let nw = ((img.width as f64 * s).round() as usize).clamp(1, side_w);
    let r = resize_bilinear(&t, nh, nw)?;
    let (oy, ox) = ((side_h - nh) / 2, (side_w - nw) / 2);
    let mut out = Tensor::full(&[channels, side_h, side_w], fill);
    let od = out.data_mut();
    let rd = r.data();
    for ch in 0..channels {
        for y in 0..nh {
            for x in 0..nw {
                od[(ch * side_h + oy + y) * side_w + ox + x] = rd[(ch * nh + y) * nw + x];
            }
        }
    }
    Ok(out)
}

/// Tiles equally-sized C × h × w tensors into a ⌈√n⌉-column grid, row-major.
/// Unused cells are zero.
pub fn tile(tiles: &[Tensor]) -> Result<(Tensor, usize, usize)> {
    let first = tiles
        .first()
        .ok_or_else(|| Error::InvalidArgument("nothing to tile".into()))?;
    let [c, h, w] = first.dims::<3>("tile")?;
    let cols = (tiles.len() as f64).sqrt().ceil() as usize;
    let rows = tiles.len().div_ceil(cols);
    let (gh, gw) = (rows * h, cols * w);
    let mut out = Tensor::zeros(&[c, gh, gw]);
    let od = out.data_mut();
    for (k, t) in tiles.iter().enumerate() {
        if t.shape() != first.shape() {
            return Err(Error::InvalidArgument("tiles must share a shape".into()));
        }
        let (r, col) = (k / cols, k % cols);
        for ch in 0..c {
            for y in 0..h {
                let src = &t.data()[(ch * h + y) * w..][..w];
                let dst = (ch * gh + r * h + y) * gw + col * w;
                od[dst..dst + w].copy_from_slice(src);
            }
        }
    }
    Ok((out, rows, cols))
}

/// Inverse of [`tile`]: tile `k` of a grid with `cols` columns and tile size `h × w`.
pub fn untile(grid: &Tensor, cols: usize, h: usize, w: usize, k: usize) -> Result<Tensor> {
    let [c, gh, gw] = grid.dims::<3>("untile")?;
    let (r, col) = (k / cols, k % cols);
    if (r + 1) * h > gh || (col + 1) * w > gw {
        return Err(Error::InvalidArgument(format!("tile {k} outside the grid")));
    }
    let mut out = Vec::with_capacity(c * h * w);
    for ch in 0..c {
        for y in 0..h {
            let s = (ch * gh + r * h + y) * gw + col * w;
            out.extend_from_slice(&grid.data()[s..s + w]);
        }
    }
    Ok(Tensor::new(vec![c, h, w], out)?)
}

/// Unit-range heatmap → colour map → alpha blend over `base`, upsampling first
/// when the map is smaller than the image.
pub fn render_overlay(base: &RgbImage, map: &Heatmap, cm: &ColorMap, alpha: f32) -> Result<(RgbImage, Heatmap)> {
    let up = if map.height() != base.height || map.width() != base.width {
        upsample_bilinear(map, base.height, base.width)?
    } else {
        map.clone()
    };
    // Interpolation can lower the peak of an already normalised map, so renormalise.
    let unit = normalize(&up);
    let heat = colorize(&unit, cm);
    Ok((overlay(base, &heat, alpha)?, unit))
}
