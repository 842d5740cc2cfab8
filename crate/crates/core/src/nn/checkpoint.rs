//! Binary checkpoint format, all integers little-endian:
//!
//! ```text
//! "NNVZ" | u8 version (=1) | u32 spec_len | spec JSON (UTF-8)
//! | u32 param_count | { u32 name_len | name | u8 rank | rank × u32 dim | f32 × numel }*
//! | u32 CRC32 of every preceding byte
//! ```

use std::path::Path;

use serde::Serialize;

use super::model::Model;
use super::spec::ModelSpec;
use crate::tensor::{ParamSet, Tensor};

pub const MAGIC: &[u8; 4] = b"NNVZ";
pub const VERSION: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("bad magic: not an NNVZ checkpoint")]
    BadMagic,
    #[error("version mismatch: file has version {found}, expected {VERSION}")]
    VersionMismatch { found: u8 },
    #[error("truncation: file ends inside {context}")]
    Truncated { context: &'static str },
    #[error("checksum failure: stored {stored:08x}, computed {computed:08x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

pub fn encode(model: &Model) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    let spec = serde_json::to_vec(model.spec()).expect("spec serializes");
    out.extend_from_slice(&(spec.len() as u32).to_le_bytes());
    out.extend_from_slice(&spec);
    out.extend_from_slice(&(model.params().len() as u32).to_le_bytes());
    for (name, t) in model.params() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, context: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated { context });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, context: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, context)?.try_into().unwrap()))
    }

    fn u8(&mut self, context: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, context)?[0])
    }
}

/// Decodes a checkpoint, returning the model and the CRC32 trailer.
pub fn decode(bytes: &[u8]) -> Result<(Model, u32), CheckpointError> {
    let head = &bytes[..bytes.len().min(4)];
    if head != &MAGIC[..head.len()] {
        return Err(CheckpointError::BadMagic);
    }
    let mut r = Reader { buf: bytes, pos: 0 };
    r.take(4, "magic")?;
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(CheckpointError::VersionMismatch { found: version });
    }
    let spec_len = r.u32("spec length")? as usize;
    let spec_bytes = r.take(spec_len, "spec")?;
    let count = r.u32("parameter count")?;
    let mut raw = Vec::new();
    for _ in 0..count {
        let name_len = r.u32("parameter name length")? as usize;
        let name = r.take(name_len, "parameter name")?;
        let rank = r.u8("parameter rank")? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.u32("parameter dims")? as usize);
        }
        let numel = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let nbytes = numel
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| CheckpointError::Malformed("parameter size overflows".into()))?;
        let payload = r.take(nbytes, "tensor data")?;
        raw.push((name, dims, payload));
    }
    let body_end = r.pos;
    let stored = r.u32("checksum")?;
    if r.pos != bytes.len() {
        return Err(CheckpointError::Malformed(format!(
            "{} trailing bytes after checksum",
            bytes.len() - r.pos
        )));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(CheckpointError::ChecksumMismatch { stored, computed });
    }

    let spec: ModelSpec =
        serde_json::from_slice(spec_bytes).map_err(|e| CheckpointError::Malformed(format!("spec json: {e}")))?;
    let mut params = ParamSet::new();
    for (name, dims, payload) in raw {
        let name = std::str::from_utf8(name)
            .map_err(|_| CheckpointError::Malformed("parameter name is not UTF-8".into()))?
            .to_string();
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let t = Tensor::new(dims, data).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        params.insert(name, t);
    }
    let model = Model::from_parts(spec, params).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
    Ok((model, stored))
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<u32, CheckpointError> {
    let bytes = encode(model);
    std::fs::write(path, &bytes)?;
    Ok(u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap()))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model, CheckpointError> {
    Ok(load_with_hash(path)?.0)
}

pub fn load_with_hash(path: impl AsRef<Path>) -> Result<(Model, u32), CheckpointError> {
    let bytes = std::fs::read(path)?;
    decode(&bytes)
}

/// Summary shared by `nnviz inspect` and `GET /api/model`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelCard {
    pub name: String,
    pub input_shape: [usize; 3],
    pub classes: Vec<String>,
    pub capture_layer: String,
    pub architecture: &'static str,
    pub parameters: usize,
    /// CRC32 trailer of the checkpoint, lowercase hex.
    pub checkpoint_hash: String,
}

impl ModelCard {
    pub fn new(model: &Model, crc: u32) -> Self {
        let spec = model.spec();
        Self {
            name: spec.name.clone(),
            input_shape: spec.input,
            classes: spec.classes.clone(),
            capture_layer: spec.capture_layer.clone(),
            architecture: if spec.cam_compatible().is_ok() { "camnet" } else { "fcnet" },
            parameters: model.params().values().map(Tensor::len).sum(),
            checkpoint_hash: format!("{crc:08x}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ModelSpec;

    fn model() -> Model {
        Model::build(ModelSpec::fcnet(1, 32, &["a", "b", "c"]), 21).unwrap()
    }

    #[test]
    fn round_trip_bit_exact() {
        let m = model();
        let bytes = encode(&m);
        let (back, crc) = decode(&bytes).unwrap();
        assert_eq!(back.spec(), m.spec());
        for (name, t) in m.params() {
            let b = &back.params()[name];
            assert_eq!(t.shape(), b.shape());
            assert!(t.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        assert_eq!(crc, crc32fast::hash(&bytes[..bytes.len() - 4]));
        assert_eq!(encode(&back), bytes);
    }

    #[test]
    fn header_layout() {
        let bytes = encode(&model());
        assert_eq!(&bytes[..4], b"NNVZ");
        assert_eq!(bytes[4], 1);
        let spec_len = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
        let spec: ModelSpec = serde_json::from_slice(&bytes[9..9 + spec_len]).unwrap();
        assert_eq!(spec.name, "fcnet");
    }

    #[test]
    fn error_taxonomy() {
        let bytes = encode(&model());

        let mut bad = bytes.clone();
        bad[1] ^= 0xff;
        assert!(matches!(decode(&bad), Err(CheckpointError::BadMagic)));

        let mut ver = bytes.clone();
        ver[4] = 2;
        assert!(matches!(decode(&ver), Err(CheckpointError::VersionMismatch { found: 2 })));

        let cut = &bytes[..bytes.len() - 1000];
        assert!(matches!(decode(cut), Err(CheckpointError::Truncated { context: "tensor data" })));
        assert!(matches!(decode(&bytes[..2]), Err(CheckpointError::Truncated { .. })));

        let mut flip = bytes.clone();
        let mid = bytes.len() - 40;
        flip[mid] ^= 0x01;
        assert!(matches!(decode(&flip), Err(CheckpointError::ChecksumMismatch { .. })));

        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(decode(&extra), Err(CheckpointError::Malformed(_))));
    }
}
