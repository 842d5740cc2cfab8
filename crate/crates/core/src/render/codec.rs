//! Binary portable pixmaps (P5 gray / P6 RGB) and lossless PNG.

use std::io::Cursor;

use super::RgbImage;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("truncation: expected {expected} payload bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("unsupported image: {0}")]
    Unsupported(String),
    #[error("png: {0}")]
    Png(String),
}

/// 8-bit raster with one (gray) or three (RGB) interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pixmap {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl Pixmap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self, CodecError> {
        if channels != 1 && channels != 3 {
            return Err(CodecError::Unsupported(format!("{channels} channels")));
        }
        if width == 0 || height == 0 {
            return Err(CodecError::Unsupported("zero-sized image".into()));
        }
        if data.len() != width * height * channels {
            return Err(CodecError::Truncated {
                expected: width * height * channels,
                got: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn to_rgb(&self) -> RgbImage {
        let data = if self.channels == 3 {
            self.data.clone()
        } else {
            self.data.iter().flat_map(|&v| [v, v, v]).collect()
        };
        RgbImage {
            width: self.width,
            height: self.height,
            data,
        }
    }
}

impl From<RgbImage> for Pixmap {
    fn from(img: RgbImage) -> Self {
        Self {
            width: img.width,
            height: img.height,
            channels: 3,
            data: img.data,
        }
    }
}

/// `P5` for gray, `P6` for RGB; header is exactly `"P6\n<w> <h>\n255\n"`.
pub fn encode_pnm(img: &Pixmap) -> Vec<u8> {
    let magic = if img.channels == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

pub fn encode_ppm(img: &RgbImage) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend_from_slice(&img.data);
    out
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<String, CodecError> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&c) = bytes.get(*pos) {
                    *pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            }
            Some(c) if c.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(CodecError::MalformedHeader("header ends early".into())),
        }
    }
    let start = *pos;
    while let Some(c) = bytes.get(*pos) {
        if c.is_ascii_whitespace() {
            break;
        }
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Pixmap, CodecError> {
    let mut pos = 0;
    let magic = header_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(CodecError::MalformedHeader(format!("unknown magic {other:?}"))),
    };
    let mut field = |name: &str| -> Result<usize, CodecError> {
        let tok = header_token(bytes, &mut pos)?;
        tok.parse::<usize>()
            .map_err(|_| CodecError::MalformedHeader(format!("{name} is not a number: {tok:?}")))
    };
    let width = field("width")?;
    let height = field("height")?;
    let maxval = field("maxval")?;
    if maxval != 255 {
        return Err(CodecError::Unsupported(format!("maxval {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(CodecError::MalformedHeader("zero dimension".into()));
    }
    // Exactly one whitespace byte separates the header from the payload.
    match bytes.get(pos) {
        Some(c) if c.is_ascii_whitespace() => pos += 1,
        _ => return Err(CodecError::MalformedHeader("missing separator after maxval".into())),
    }
    let expected = width * height * channels;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(CodecError::Truncated {
            expected,
            got: payload.len(),
        });
    }
    Pixmap::new(width, height, channels, payload[..expected].to_vec())
}

pub fn encode_png(img: &Pixmap) -> Result<Vec<u8>, CodecError> {
    use image::ImageEncoder;
    let mut out = Vec::new();
    let color = if img.channels == 1 {
        image::ExtendedColorType::L8
    } else {
        image::ExtendedColorType::Rgb8
    };
    image::codecs::png::PngEncoder::new(&mut out)
        .write_image(&img.data, img.width as u32, img.height as u32, color)
        .map_err(|e| CodecError::Png(e.to_string()))?;
    Ok(out)
}

pub fn decode_png(bytes: &[u8]) -> Result<Pixmap, CodecError> {
    let img = image::load(Cursor::new(bytes), image::ImageFormat::Png).map_err(|e| CodecError::Png(e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        Pixmap::new(w, h, 3, img.to_rgb8().into_raw())
    } else {
        Pixmap::new(w, h, 1, img.to_luma8().into_raw())
    }
}

/// Decodes PNG or P5/P6 by sniffing the leading bytes.
pub fn decode_any(bytes: &[u8]) -> Result<Pixmap, CodecError> {
    if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") || bytes.starts_with(b"P6") {
        decode_pnm(bytes)
    } else {
        Err(CodecError::Unsupported("neither PNG nor binary PNM".into()))
    }
}
