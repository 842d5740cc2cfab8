//! Activation and first-layer filter mosaics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::nn::{Layer, Model};
use crate::render;
use crate::tensor::Tensor;

/// Gray level used for a kernel whose weights are all equal.
pub const FLAT_KERNEL_GRAY: f32 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TileScale {
    pub min: f32,
    pub max: f32,
    /// `max − min` below [`render::DEGENERATE_EPS`]; the tile was filled with a constant.
    pub degenerate: bool,
}

/// Tiles in row-major order on a `rows × cols` grid, each `tile_h × tile_w`.
#[derive(Debug, Clone, PartialEq)]
pub struct TileGrid {
    /// C × (rows·tile_h) × (cols·tile_w), values in `[0, 1]`.
    pub grid: Tensor,
    pub rows: usize,
    pub cols: usize,
    pub tile_h: usize,
    pub tile_w: usize,
    pub scales: Vec<TileScale>,
}

impl TileGrid {
    pub fn tile(&self, k: usize) -> Result<Tensor> {
        render::untile(&self.grid, self.cols, self.tile_h, self.tile_w, k)
    }
}

fn minmax_scale(t: &Tensor, flat_value: f32) -> (Tensor, TileScale) {
    let (min, max) = (t.min(), t.max());
    let degenerate = !(max - min >= render::DEGENERATE_EPS);
    let scaled = if degenerate {
        Tensor::full(t.shape(), flat_value)
    } else {
        t.map(|v| (v - min) / (max - min))
    };
    (scaled, TileScale { min, max, degenerate })
}

fn layer_output(model: &Model, image: &Tensor, layer: &str) -> Result<Tensor> {
    let names = model.layer_names();
    let idx = names
        .iter()
        .position(|n| n == layer)
        .ok_or_else(|| Error::UnknownLayer(layer.to_string()))?;
    let info = &model.layer_infos()[idx];
    if !matches!(info.layer, Layer::Conv { .. } | Layer::Relu) || info.out_shape.len() != 3 {
        return Err(Error::InvalidArgument(format!(
            "layer `{layer}` is not a spatial conv or ReLU output"
        )));
    }
    let f = model.forward(image)?;
    let v = f.tape.value(f.layers[idx]);
    Ok(v.clone().reshape(&v.shape()[1..])?)
}

/// Raw H × W activation of one channel of a conv or ReLU layer.
pub fn activation_channel(model: &Model, image: &Tensor, layer: &str, channel: usize) -> Result<Tensor> {
    let out = layer_output(model, image, layer)?;
    let [k, h, w] = out.dims::<3>("activation_channel")?;
    if channel >= k {
        return Err(Error::InvalidArgument(format!("layer `{layer}` has {k} channels, asked for {channel}")));
    }
    Ok(Tensor::new(vec![h, w], out.data()[channel * h * w..(channel + 1) * h * w].to_vec())?)
}

/// One min-max scaled tile per channel on a ⌈√K⌉ × ⌈√K⌉ grid. Constant
/// tiles (including all-zero ones) render black.
pub fn activation_grid(model: &Model, image: &Tensor, layer: &str) -> Result<TileGrid> {
    let out = layer_output(model, image, layer)?;
    let [k, h, w] = out.dims::<3>("activation_grid")?;
    let (tiles, scales): (Vec<_>, Vec<_>) = out
        .data()
        .chunks_exact(h * w)
        .take(k)
        .map(|p| {
            let t = Tensor::new(vec![1, h, w], p.to_vec()).expect("plane");
            minmax_scale(&t, 0.0)
        })
        .unzip();
    let (grid, rows, cols) = render::tile(&tiles)?;
    Ok(TileGrid {
        grid,
        rows,
        cols,
        tile_h: h,
        tile_w: w,
        scales,
    })
}

/// First-layer kernels, each min-max scaled over all its input channels and
/// tiled like [`activation_grid`]. A constant kernel becomes uniform
/// [`FLAT_KERNEL_GRAY`]. Deeper convs are rejected: their kernels do not act on pixels.
pub fn filter_grid(model: &Model, layer: &str) -> Result<TileGrid> {
    let infos = model.layer_infos();
    let info = infos
        .iter()
        .find(|i| i.name == layer)
        .ok_or_else(|| Error::UnknownLayer(layer.to_string()))?;
    let first_conv = infos.iter().find(|i| matches!(i.layer, Layer::Conv { .. }));
    if !matches!(info.layer, Layer::Conv { .. }) || first_conv.map(|f| &f.name) != Some(&info.name) {
        return Err(Error::InvalidArgument(format!(
            "filter grids show first-layer kernels only; `{layer}` is not the first conv"
        )));
    }
    let kernel = &model.params()[&info.params[0].0];
    let [o, i, kh, kw] = kernel.dims::<4>("filter_grid")?;
    let (tiles, scales): (Vec<_>, Vec<_>) = kernel
        .data()
        .chunks_exact(i * kh * kw)
        .take(o)
        .map(|k| {
            let t = Tensor::new(vec![i, kh, kw], k.to_vec()).expect("kernel");
            minmax_scale(&t, FLAT_KERNEL_GRAY)
        })
        .unzip();
    let (grid, rows, cols) = render::tile(&tiles)?;
    Ok(TileGrid {
        grid,
        rows,
        cols,
        tile_h: kh,
        tile_w: kw,
        scales,
    })
}
