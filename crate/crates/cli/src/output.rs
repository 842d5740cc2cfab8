use std::fs;
use std::path::{Path, PathBuf};

use nnviz_core::render::{self, Pixmap, RgbImage};
use nnviz_core::Tensor;

use crate::{Failure, Format, Global};

fn write_pixmap(dir: &Path, stem: &str, pm: &Pixmap, format: Format) -> Result<PathBuf, Failure> {
    let (ext, bytes) = match format {
        Format::Png => ("png", render::encode_png(pm)?),
        Format::Ppm => (if pm.channels == 1 { "pgm" } else { "ppm" }, render::encode_pnm(pm)),
    };
    let path = dir.join(format!("{stem}.{ext}"));
    fs::write(&path, bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    Ok(path)
}

/// Writes a `[0, 1]` C × H × W tensor as `<dir>/<stem>.<ext>`.
pub fn write_tensor(dir: &Path, stem: &str, t: &Tensor, format: Format) -> Result<PathBuf, Failure> {
    write_pixmap(dir, stem, &render::tensor_to_pixmap(&t.map(|v| v.clamp(0.0, 1.0)))?, format)
}

pub fn write_rgb(dir: &Path, stem: &str, img: &RgbImage, format: Format) -> Result<PathBuf, Failure> {
    write_pixmap(dir, stem, &Pixmap::new(img.width, img.height, 3, img.data.clone())?, format)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))
}

/// Row-major grid, one CSV line per row.
pub fn grid_csv(t: &Tensor) -> String {
    let w = *t.shape().last().unwrap_or(&1);
    let mut s = String::new();
    for row in t.data().chunks(w) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Prints `summary` as JSON under `--json`, else the text lines.
pub fn report(global: &Global, summary: &serde_json::Value, text: &[String]) {
    if global.json {
        println!("{summary}");
    } else {
        for line in text {
            println!("{line}");
        }
    }
}
