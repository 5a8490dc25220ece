//! Binary checkpoint archive.
//!
//! Layout (little-endian):
//! `b"CAVPCKPT"`, `u32` header length, header JSON, `u32` parameter count,
//! then per parameter `u32` name length, UTF-8 name, `u32` rank, `u64` dims,
//! and row-major `f64` values.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::substrate::{ParamStore, SubstrateError, Tensor};
use crate::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CAVPCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint header: {0}")]
    Header(#[from] serde_json::Error),
    #[error("checkpoint is missing parameter '{0}'")]
    MissingParameter(String),
    #[error("checkpoint has unexpected parameter '{0}'")]
    UnexpectedParameter(String),
    #[error("parameter '{name}' has shape {found:?}, model expects {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error(transparent)]
    Tensor(#[from] SubstrateError),
}

/// JSON header. Extra fields (model config, vocabulary, ...) ride along in `extra`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: u32,
    pub model_config_hash: String,
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

impl CheckpointHeader {
    pub fn new(model_config_hash: impl Into<String>) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            model_config_hash: model_config_hash.into(),
            extra: serde_json::Map::new(),
        }
    }
}

/// Named tensors read back from an archive, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Tensor<f64>)>,
}

fn write_u32<W: Write>(w: &mut W, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_checkpoint<T: Scalar, W: Write>(
    out: &mut W,
    header: &CheckpointHeader,
    store: &ParamStore<T>,
) -> Result<(), CheckpointError> {
    out.write_all(CHECKPOINT_MAGIC)?;
    let json = serde_json::to_vec(header)?;
    write_u32(out, json.len() as u32)?;
    out.write_all(&json)?;
    write_u32(out, store.len() as u32)?;
    for (_, p) in store.iter() {
        let name = p.name().as_bytes();
        write_u32(out, name.len() as u32)?;
        out.write_all(name)?;
        write_u32(out, p.value.shape().len() as u32)?;
        for &d in p.value.shape() {
            out.write_all(&(d as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(p.value.len() * 8);
        for v in p.value.data() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(input: &mut R) -> Result<Checkpoint, CheckpointError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let hlen = read_u32(input)? as usize;
    let mut hbuf = vec![0u8; hlen];
    input.read_exact(&mut hbuf)?;
    let header: CheckpointHeader = serde_json::from_slice(&hbuf)?;
    if header.format_version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(header.format_version));
    }
    let count = read_u32(input)? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let nlen = read_u32(input)? as usize;
        let mut nbuf = vec![0u8; nlen];
        input.read_exact(&mut nbuf)?;
        let name = String::from_utf8_lossy(&nbuf).into_owned();
        let rank = read_u32(input)? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut b = [0u8; 8];
            input.read_exact(&mut b)?;
            shape.push(u64::from_le_bytes(b) as usize);
        }
        let n: usize = shape.iter().product();
        let mut vbuf = vec![0u8; n * 8];
        input.read_exact(&mut vbuf)?;
        let data = vbuf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        tensors.push((name, Tensor::new(shape, data)?));
    }
    Ok(Checkpoint { header, tensors })
}

impl Checkpoint {
    /// Copies every tensor into the matching parameter of `store`. Names and
    /// shapes must agree exactly in both directions.
    pub fn load_into<T: Scalar>(&self, store: &mut ParamStore<T>) -> Result<(), CheckpointError> {
        if self.tensors.len() != store.len() {
            for (name, _) in &self.tensors {
                store.id(name).map_err(|_| CheckpointError::UnexpectedParameter(name.clone()))?;
            }
            let names: Vec<&str> = self.tensors.iter().map(|(n, _)| n.as_str()).collect();
            for (_, p) in store.iter() {
                if !names.contains(&p.name()) {
                    return Err(CheckpointError::MissingParameter(p.name().to_string()));
                }
            }
        }
        for (name, t) in &self.tensors {
            let id = store
                .id(name)
                .map_err(|_| CheckpointError::UnexpectedParameter(name.clone()))?;
            let p = store.get_mut(id);
            if p.value.shape() != t.shape() {
                return Err(CheckpointError::ShapeMismatch {
                    name: name.clone(),
                    expected: p.value.shape().to_vec(),
                    found: t.shape().to_vec(),
                });
            }
            for (dst, &src) in p.value.data_mut().iter_mut().zip(t.data()) {
                *dst = T::of(src);
            }
        }
        Ok(())
    }
}
