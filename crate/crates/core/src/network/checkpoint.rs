//! Checkpoint persistence.
//!
//! Layout: magic "ASTC", format version u32 LE, length-prefixed JSON block
//! (spec + training meta), then one tensor blob per parameter in spec order.
//! Each blob is rank u32 LE, the dims as u32 LE, then the values as f32 LE.
//! Checkpoints hold f32 data, so save → load round-trips bit-exactly.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::NetworkSpec;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"ASTC";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("magic mismatch: expected {expected:?}, found {found:?}")]
    MagicMismatch { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("shape mismatch for layer {layer}")]
    ShapeMismatch { layer: String },
    #[error("trailing bytes after final tensor")]
    TrailingData,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, CheckpointError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub final_loss: f64,
    pub class_names: Vec<String>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Spec, training metadata, and f32 parameter tensors in spec order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub meta: TrainingMeta,
    pub entries: Vec<CheckpointTensor>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    meta: TrainingMeta,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        self.write_to(&mut out)?;
        out.flush()?;
        Ok(())
    }

    pub fn write_to<W: Write>(&self, out: &mut W) -> Result<()> {
        out.write_all(&CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let header = serde_json::to_vec(&Header {
            spec: self.spec.clone(),
            meta: self.meta.clone(),
        })
        .map_err(|e| CheckpointError::MalformedHeader(e.to_string()))?;
        out.write_all(&(header.len() as u32).to_le_bytes())?;
        out.write_all(&header)?;
        for entry in &self.entries {
            write_tensor_blob(out, &entry.shape, &entry.data)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        Self::read_from(&mut reader)
    }

    pub fn read_from<R: Read>(reader: &mut R) -> Result<Self> {
        let mut magic = [0u8; 4];
        read_exact(reader, &mut magic, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::MagicMismatch {
                expected: CHECKPOINT_MAGIC,
                found: magic,
            });
        }
        let version = read_u32(reader, "version")?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::VersionMismatch {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let header_len = read_u32(reader, "header length")? as usize;
        let mut header_bytes = vec![0u8; header_len];
        read_exact(reader, &mut header_bytes, "header")?;
        let header: Header = serde_json::from_slice(&header_bytes)
            .map_err(|e| CheckpointError::MalformedHeader(e.to_string()))?;

        let mut entries = Vec::new();
        for (name, expected_shape) in header.spec.param_shapes() {
            let (shape, data) = read_tensor_blob(reader)?;
            if shape != expected_shape {
                return Err(CheckpointError::ShapeMismatch { layer: name });
            }
            entries.push(CheckpointTensor { name, shape, data });
        }
        let mut probe = [0u8; 1];
        if reader.read(&mut probe)? != 0 {
            return Err(CheckpointError::TrailingData);
        }
        Ok(Self {
            spec: header.spec,
            meta: header.meta,
            entries,
        })
    }
}

/// One tensor blob: rank u32 LE, dims u32 LE each, values f32 LE.
pub fn write_tensor_blob<W: Write>(
    out: &mut W,
    shape: &[usize],
    data: &[f32],
) -> std::result::Result<(), CheckpointError> {
    out.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_tensor_blob<R: Read>(
    reader: &mut R,
) -> std::result::Result<(Vec<usize>, Vec<f32>), CheckpointError> {
    let rank = read_u32(reader, "tensor rank")? as usize;
    if rank > 8 {
        return Err(CheckpointError::MalformedHeader(format!("implausible tensor rank {rank}")));
    }
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(read_u32(reader, "tensor dim")? as usize);
    }
    let numel: usize = shape.iter().product();
    let mut bytes = vec![0u8; numel * 4];
    read_exact(reader, &mut bytes, "tensor data")?;
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((shape, data))
}

fn read_u32<R: Read>(reader: &mut R, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    read_exact(reader, &mut buf, what)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_exact<R: Read>(reader: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    reader
        .read_exact(buf)
        .map_err(|_| CheckpointError::Truncated(format!("while reading {what}")))
}
