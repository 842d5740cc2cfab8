//! Shapes datasets as a directory of binary pixmaps plus `index.json`.
//!
//! Pixels are stored at 8 bits, so an imported set equals the exported one
//! up to quantisation (`|Δ| ≤ 1/510`). Labels, shapes and seeds are exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::shapes::{PlacedShape, ShapesImage, CLASS_NAMES};
use crate::error::{Error, Result};
use crate::render::{self, decode_pnm, encode_pnm};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub file: String,
    pub seed: u64,
    pub labels: Vec<f32>,
    pub shapes: Vec<PlacedShape>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub classes: Vec<String>,
    pub side: usize,
    pub channels: usize,
    /// Generator seed, when the set came from one.
    pub seed: Option<u64>,
    pub images: Vec<IndexEntry>,
}

/// Writes `img_00000.pgm` (or `.ppm` for RGB) per image and the index.
pub fn export_dir(images: &[ShapesImage], seed: Option<u64>, dir: &Path) -> Result<DatasetIndex> {
    let first = images.first().ok_or(Error::EmptyDataset)?;
    let [channels, side, _] = first.pixels.dims::<3>("export")?;
    fs::create_dir_all(dir)?;
    let ext = if channels == 1 { "pgm" } else { "ppm" };
    let mut entries = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        if img.pixels.shape() != first.pixels.shape() {
            return Err(Error::InvalidArgument(format!("image {i} has shape {:?}", img.pixels.shape())));
        }
        let file = format!("img_{i:05}.{ext}");
        fs::write(dir.join(&file), encode_pnm(&render::tensor_to_pixmap(&img.pixels)?))?;
        entries.push(IndexEntry {
            file,
            seed: img.seed,
            labels: img.labels.clone(),
            shapes: img.shapes.clone(),
        });
    }
    let index = DatasetIndex {
        classes: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        side,
        channels,
        seed,
        images: entries,
    };
    fs::write(dir.join(INDEX_FILE), serde_json::to_vec_pretty(&index)?)?;
    Ok(index)
}

pub fn import_dir(dir: &Path) -> Result<(DatasetIndex, Vec<ShapesImage>)> {
    let index: DatasetIndex = serde_json::from_slice(&fs::read(dir.join(INDEX_FILE))?)?;
    let images = index
        .images
        .iter()
        .map(|e| {
            let pm = decode_pnm(&fs::read(dir.join(&e.file))?)?;
            if pm.width != index.side || pm.height != index.side || pm.channels != index.channels {
                return Err(Error::InvalidArgument(format!(
                    "{} is {}×{}×{}, index says {}×{}×{}",
                    e.file, pm.channels, pm.height, pm.width, index.channels, index.side, index.side
                )));
            }
            Ok(ShapesImage {
                pixels: render::pixmap_to_tensor(&pm, index.channels)?,
                labels: e.labels.clone(),
                shapes: e.shapes.clone(),
                seed: e.seed,
            })
        })
        .collect::<Result<_>>()?;
    Ok((index, images))
}
