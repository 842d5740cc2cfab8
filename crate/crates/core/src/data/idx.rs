//! IDX container files (the MNIST distribution format).
//!
//! Header, big-endian: `u16 0 | u8 type | u8 rank | rank × u32 dim`, followed
//! by `prod(dims)` elements of the given type.

use super::{LabeledSet, Sample};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IdxError {
    #[error("idx: bad magic, first two bytes must be zero")]
    BadMagic,
    #[error("idx: unknown type code 0x{0:02x}")]
    UnknownType(u8),
    #[error("idx: truncated, header declares {expected} payload bytes but {got} are present")]
    Truncated { expected: usize, got: usize },
    #[error("idx: header truncated")]
    TruncatedHeader,
    #[error("idx: {0} trailing bytes after payload")]
    TrailingBytes(usize),
    #[error("idx: {0}")]
    Shape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdxType {
    U8 = 0x08,
    I8 = 0x09,
    I16 = 0x0B,
    I32 = 0x0C,
    F32 = 0x0D,
    F64 = 0x0E,
}

impl IdxType {
    fn from_code(code: u8) -> Result<Self, IdxError> {
        Ok(match code {
            0x08 => Self::U8,
            0x09 => Self::I8,
            0x0B => Self::I16,
            0x0C => Self::I32,
            0x0D => Self::F32,
            0x0E => Self::F64,
            other => return Err(IdxError::UnknownType(other)),
        })
    }

    pub fn width(self) -> usize {
        match self {
            Self::U8 | Self::I8 => 1,
            Self::I16 => 2,
            Self::I32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }
}

/// Raw decoded IDX array: header fields plus the untouched payload.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxArray {
    pub kind: IdxType,
    pub dims: Vec<usize>,
    pub payload: Vec<u8>,
}

impl IdxArray {
    pub fn values(&self) -> Vec<f64> {
        let w = self.kind.width();
        self.payload
            .chunks_exact(w)
            .map(|c| match self.kind {
                IdxType::U8 => c[0] as f64,
                IdxType::I8 => c[0] as i8 as f64,
                IdxType::I16 => i16::from_be_bytes([c[0], c[1]]) as f64,
                IdxType::I32 => i32::from_be_bytes(c.try_into().unwrap()) as f64,
                IdxType::F32 => f32::from_be_bytes(c.try_into().unwrap()) as f64,
                IdxType::F64 => f64::from_be_bytes(c.try_into().unwrap()),
            })
            .collect()
    }
}

pub fn parse_idx_raw(bytes: &[u8]) -> Result<IdxArray, IdxError> {
    if bytes.len() < 4 {
        if bytes.iter().take(2).any(|&b| b != 0) {
            return Err(IdxError::BadMagic);
        }
        return Err(IdxError::TruncatedHeader);
    }
    if bytes[0] != 0 || bytes[1] != 0 {
        return Err(IdxError::BadMagic);
    }
    let kind = IdxType::from_code(bytes[2])?;
    let rank = bytes[3] as usize;
    let header = 4 + 4 * rank;
    if bytes.len() < header {
        return Err(IdxError::TruncatedHeader);
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let expected = dims.iter().product::<usize>() * kind.width();
    let got = bytes.len() - header;
    if got < expected {
        return Err(IdxError::Truncated { expected, got });
    }
    if got > expected {
        return Err(IdxError::TrailingBytes(got - expected));
    }
    Ok(IdxArray {
        kind,
        dims,
        payload: bytes[header..].to_vec(),
    })
}

pub fn write_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = vec![0, 0, array.kind as u8, array.dims.len() as u8];
    for &d in &array.dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.payload);
    out
}

/// Parses an IDX file into a tensor. Rank-3 files (`N×H×W` images) gain a
/// channel axis, becoming `N×1×H×W`; unsigned-byte arrays of rank ≥ 2 are
/// scaled to `[0, 1]`. Rank-1 files (labels) keep their raw values.
pub fn parse_idx(bytes: &[u8]) -> Result<Tensor, IdxError> {
    let arr = parse_idx_raw(bytes)?;
    if arr.dims.is_empty() || arr.dims.contains(&0) {
        return Err(IdxError::Shape(format!("unsupported dims {:?}", arr.dims)));
    }
    let scale = if arr.kind == IdxType::U8 && arr.dims.len() >= 2 { 1.0 / 255.0 } else { 1.0 };
    let data: Vec<f32> = arr.values().into_iter().map(|v| (v * scale) as f32).collect();
    let shape = match arr.dims.as_slice() {
        &[n, h, w] => vec![n, 1, h, w],
        d => d.to_vec(),
    };
    Tensor::new(shape, data).map_err(|e| IdxError::Shape(e.to_string()))
}

/// Pairs an `N×1×H×W` image tensor with `N` integer labels as a one-hot
/// set. Classes are the digits `0..=max_label`, named by their value.
pub fn labeled_set(images: &Tensor, labels: &Tensor) -> crate::Result<(LabeledSet, Vec<String>)> {
    let [n, c, h, w] = images.dims::<4>("labeled_set")?;
    if labels.rank() != 1 || labels.len() != n {
        return Err(crate::Error::InvalidArgument(format!(
            "{n} images but labels have shape {:?}",
            labels.shape()
        )));
    }
    if let Some(bad) = labels.data().iter().find(|v| !(v.fract() == 0.0 && **v >= 0.0 && **v < 256.0)) {
        return Err(crate::Error::InvalidArgument(format!("label {bad} is not a small non-negative integer")));
    }
    let classes = labels.data().iter().fold(0.0f32, |a, &b| a.max(b)) as usize + 1;
    let plane = c * h * w;
    let samples = images
        .data()
        .chunks_exact(plane)
        .zip(labels.data())
        .map(|(px, &l)| {
            let mut onehot = vec![0.0; classes];
            onehot[l as usize] = 1.0;
            Ok(Sample {
                pixels: Tensor::new(vec![c, h, w], px.to_vec())?,
                labels: onehot,
            })
        })
        .collect::<crate::Result<Vec<_>>>()?;
    Ok((LabeledSet::new(samples)?, (0..classes).map(|k| k.to_string()).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(dims: &[u32], payload: &[u8]) -> Vec<u8> {
        let mut b = vec![0, 0, 0x08, dims.len() as u8];
        for d in dims {
            b.extend_from_slice(&d.to_be_bytes());
        }
        b.extend_from_slice(payload);
        b
    }

    #[test]
    fn header_dims_drive_shape() {
        let t = parse_idx(&file(&[2, 3], &[0, 51, 102, 153, 204, 255])).unwrap();
        assert_eq!(t.shape(), &[2, 3]);
        assert_eq!(t.data()[5], 1.0);
        assert!((t.data()[1] - 0.2).abs() < 1e-7);
    }

    #[test]
    fn images_get_channel_axis_and_labels_stay_raw() {
        let t = parse_idx(&file(&[2, 2, 2], &[255; 8])).unwrap();
        assert_eq!(t.shape(), &[2, 1, 2, 2]);
        let l = parse_idx(&file(&[3], &[7, 0, 9])).unwrap();
        assert_eq!(l.data(), &[7.0, 0.0, 9.0]);
    }

    #[test]
    fn error_taxonomy() {
        assert_eq!(
            parse_idx(&file(&[2, 3], &[1, 2, 3])).unwrap_err(),
            IdxError::Truncated { expected: 6, got: 3 }
        );
        let mut bad_type = file(&[1], &[1]);
        bad_type[2] = 0x42;
        assert_eq!(parse_idx(&bad_type).unwrap_err(), IdxError::UnknownType(0x42));
        let mut bad_magic = file(&[1], &[1]);
        bad_magic[0] = 1;
        assert_eq!(parse_idx(&bad_magic).unwrap_err(), IdxError::BadMagic);
        assert_eq!(parse_idx(&[0, 0, 8, 2, 0, 0]).unwrap_err(), IdxError::TruncatedHeader);
        assert_eq!(parse_idx(&file(&[1], &[1, 2])).unwrap_err(), IdxError::TrailingBytes(1));
    }

    #[test]
    fn raw_round_trip() {
        let bytes = file(&[3, 2, 2], &(0..12).collect::<Vec<u8>>());
        assert_eq!(write_idx(&parse_idx_raw(&bytes).unwrap()), bytes);
        let mut f = vec![0, 0, 0x0D, 1, 0, 0, 0, 2];
        f.extend_from_slice(&1.5f32.to_be_bytes());
        f.extend_from_slice(&(-2.0f32).to_be_bytes());
        let arr = parse_idx_raw(&f).unwrap();
        assert_eq!(arr.values(), vec![1.5, -2.0]);
        assert_eq!(write_idx(&arr), f);
    }

    #[test]
    fn labeled_set_one_hot() {
        let images = parse_idx(&file(&[3, 2, 2], &[255; 12])).unwrap();
        let labels = parse_idx(&file(&[3], &[0, 2, 1])).unwrap();
        let (set, classes) = labeled_set(&images, &labels).unwrap();
        assert_eq!(classes, ["0", "1", "2"]);
        assert_eq!(set.samples[1].labels, vec![0.0, 0.0, 1.0]);
        assert_eq!(set.samples[0].pixels.shape(), &[1, 2, 2]);
        let short = parse_idx(&file(&[2], &[0, 1])).unwrap();
        assert!(labeled_set(&images, &short).is_err());
    }
}
