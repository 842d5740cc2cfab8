//! Synthetic multi-label shapes: square outlines, discs and plus-shaped
//! crosses on a low-amplitude noise background, with exact bounding boxes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

pub const CLASS_NAMES: [&str; 3] = ["square", "circle", "cross"];

pub const NOISE_MAX: f32 = 0.1;
pub const INTENSITY_MIN: f32 = 0.7;
pub const INTENSITY_MAX: f32 = 1.0;
const SQUARE_STROKE: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    Circle,
    Cross,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 3] = [ShapeKind::Square, ShapeKind::Circle, ShapeKind::Cross];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.index()]
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// Half-open pixel box `[x0, x1) × [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl BoundingBox {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn intersects(&self, other: &BoundingBox) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    fn grown(&self, by: usize) -> BoundingBox {
        BoundingBox {
            x0: self.x0.saturating_sub(by),
            y0: self.y0.saturating_sub(by),
            x1: self.x1 + by,
            y1: self.y1 + by,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacedShape {
    pub kind: ShapeKind,
    pub bbox: BoundingBox,
    pub intensity: f32,
}

impl PlacedShape {
    /// Whether pixel `(x, y)` is lit by this shape.
    pub fn covers(&self, x: usize, y: usize) -> bool {
        let b = &self.bbox;
        if !b.contains(x, y) {
            return false;
        }
        let size = b.x1 - b.x0;
        let (lx, ly) = (x - b.x0, y - b.y0);
        match self.kind {
            ShapeKind::Square => {
                lx < SQUARE_STROKE || ly < SQUARE_STROKE || lx >= size - SQUARE_STROKE || ly >= size - SQUARE_STROKE
            }
            ShapeKind::Circle => {
                let r = size as f32 / 2.0;
                let dx = lx as f32 + 0.5 - r;
                let dy = ly as f32 + 0.5 - r;
                dx * dx + dy * dy <= r * r
            }
            ShapeKind::Cross => {
                let arm = (size / 3).max(2);
                let a = (size - arm) / 2;
                (a..a + arm).contains(&lx) || (a..a + arm).contains(&ly)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapesConfig {
    pub n: usize,
    pub seed: u64,
    pub max_shapes: usize,
    pub side: usize,
    pub channels: usize,
    pub min_size: usize,
    pub max_size: usize,
}

impl ShapesConfig {
    /// 32×32 single-channel images, shapes 8–12 px wide.
    pub fn new(n: usize, seed: u64, max_shapes: usize) -> Self {
        Self {
            n,
            seed,
            max_shapes,
            side: 32,
            channels: 1,
            min_size: 8,
            max_size: 12,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidArgument("n must be >= 1".into()));
        }
        if !(1..=3).contains(&self.max_shapes) {
            return Err(Error::InvalidArgument("max_shapes must be 1, 2 or 3".into()));
        }
        if self.min_size < 4 || self.min_size > self.max_size || self.max_size > self.side {
            return Err(Error::InvalidArgument(format!(
                "shape sizes {}..={} do not fit a {} px image",
                self.min_size, self.max_size, self.side
            )));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::InvalidArgument("channels must be 1 or 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapesImage {
    /// C × side × side in `[0, 1]`.
    pub pixels: Tensor,
    /// One entry per class in [`CLASS_NAMES`] order.
    pub labels: Vec<f32>,
    pub shapes: Vec<PlacedShape>,
    pub seed: u64,
}

impl ShapesImage {
    /// Renders noise from `seed` and paints `shapes` over it.
    pub fn render(side: usize, channels: usize, seed: u64, shapes: Vec<PlacedShape>) -> Self {
        let mut noise = SplitMix64::stream(seed, 1);
        let plane: Vec<f32> = (0..side * side)
            .map(|i| {
                let (x, y) = (i % side, i / side);
                let base = noise.uniform(0.0, NOISE_MAX);
                shapes.iter().find(|s| s.covers(x, y)).map_or(base, |s| s.intensity)
            })
            .collect();
        let mut data = Vec::with_capacity(channels * side * side);
        for _ in 0..channels {
            data.extend_from_slice(&plane);
        }
        let mut labels = vec![0.0; CLASS_NAMES.len()];
        for s in &shapes {
            labels[s.kind.index()] = 1.0;
        }
        Self {
            pixels: Tensor::new(vec![channels, side, side], data).expect("consistent dims"),
            labels,
            shapes,
            seed,
        }
    }

    pub fn side(&self) -> usize {
        self.pixels.shape()[1]
    }

    pub fn boxes(&self) -> Vec<(ShapeKind, BoundingBox)> {
        self.shapes.iter().map(|s| (s.kind, s.bbox)).collect()
    }

    pub fn bbox_of(&self, kind: ShapeKind) -> Option<BoundingBox> {
        self.shapes.iter().find(|s| s.kind == kind).map(|s| s.bbox)
    }

    /// The same image with every shape of `kind` erased.
    pub fn without(&self, kind: ShapeKind) -> Self {
        let shapes = self.shapes.iter().filter(|s| s.kind != kind).copied().collect();
        Self::render(self.side(), self.pixels.shape()[0], self.seed, shapes)
    }
}

fn place(rng: &mut SplitMix64, cfg: &ShapesConfig, kinds: &[ShapeKind]) -> Vec<PlacedShape> {
    'attempt: loop {
        let mut placed: Vec<PlacedShape> = Vec::with_capacity(kinds.len());
        for &kind in kinds {
            let mut tries = 0;
            loop {
                tries += 1;
                if tries > 200 {
                    continue 'attempt;
                }
                let size = rng.range_inclusive(cfg.min_size, cfg.max_size);
                let x0 = rng.range_inclusive(0, cfg.side - size);
                let y0 = rng.range_inclusive(0, cfg.side - size);
                let bbox = BoundingBox {
                    x0,
                    y0,
                    x1: x0 + size,
                    y1: y0 + size,
                };
                // One pixel of clearance between shapes.
                if placed.iter().any(|p| p.bbox.grown(1).intersects(&bbox)) {
                    continue;
                }
                let intensity = rng.uniform(INTENSITY_MIN, INTENSITY_MAX);
                placed.push(PlacedShape { kind, bbox, intensity });
                break;
            }
        }
        return placed;
    }
}

fn image_seed(seed: u64, index: usize) -> u64 {
    SplitMix64::stream(seed, index as u64).next_u64()
}

/// `cfg.n` images, each holding between one and `cfg.max_shapes` distinct shape classes.
pub fn gen_shapes(cfg: &ShapesConfig) -> Result<Vec<ShapesImage>> {
    cfg.validate()?;
    Ok((0..cfg.n)
        .map(|i| {
            let seed = image_seed(cfg.seed, i);
            let mut rng = SplitMix64::stream(seed, 0);
            let k = rng.range_inclusive(1, cfg.max_shapes);
            let mut kinds = ShapeKind::ALL;
            rng.shuffle(&mut kinds);
            let shapes = place(&mut rng, cfg, &kinds[..k]);
            ShapesImage::render(cfg.side, cfg.channels, seed, shapes)
        })
        .collect())
}

/// `cfg.n` images each containing exactly the given shape kinds.
pub fn gen_composed(cfg: &ShapesConfig, kinds: &[ShapeKind]) -> Result<Vec<ShapesImage>> {
    if kinds.is_empty() || kinds.len() > 3 {
        return Err(Error::InvalidArgument("compose between one and three shapes".into()));
    }
    let cfg = ShapesConfig {
        max_shapes: kinds.len(),
        ..*cfg
    };
    cfg.validate()?;
    Ok((0..cfg.n)
        .map(|i| {
            let seed = image_seed(cfg.seed ^ 0xC0_4905ED, i);
            let mut rng = SplitMix64::stream(seed, 0);
            let shapes = place(&mut rng, &cfg, kinds);
            ShapesImage::render(cfg.side, cfg.channels, seed, shapes)
        })
        .collect())
}
