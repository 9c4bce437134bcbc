//! Binary checkpoints: a JSON header followed by named little-endian f64
//! tensors.
//!
//! Layout: `MAGIC`, u32 version, u8 kind, u64 header length, header JSON,
//! u32 tensor count, then per tensor: u32 name length, name, u32 rank,
//! u64 dims, f64 values.

use std::fs;
use std::path::Path;

use deepmetric_core::autodiff::Tensor;
use deepmetric_core::embedder::{Model, ModelConfig};
use deepmetric_core::partition::{Partitioner, PartitionerKind};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

const MAGIC: &[u8; 8] = b"DMETRIC\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum CheckpointKind {
    Embedder = 0,
    Partitioner = 1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderHeader {
    pub model: ModelConfig,
    /// Resolved experiment that produced the weights.
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionerHeader {
    pub kind: PartitionerKind,
}

pub fn encode(kind: CheckpointKind, header: &impl Serialize, tensors: &[(String, Tensor)]) -> Vec<u8> {
    let json = serde_json::to_vec(header).expect("headers serialize");
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(kind as u8);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or("truncated file")?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn len(&mut self) -> std::result::Result<usize, String> {
        usize::try_from(self.u64()?).map_err(|_| "length overflows usize".to_string())
    }
}

pub fn decode<H: for<'de> Deserialize<'de>>(
    bytes: &[u8],
    expected: CheckpointKind,
) -> std::result::Result<(H, Vec<(String, Tensor)>), String> {
    let mut c = Cursor { bytes, at: 0 };
    if c.take(MAGIC.len())? != MAGIC {
        return Err("not a deepmetric checkpoint".into());
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let kind = c.take(1)?[0];
    if kind != expected as u8 {
        return Err(format!("expected a {expected:?} checkpoint, found kind {kind}"));
    }
    let header_len = c.len()?;
    let header = serde_json::from_slice(c.take(header_len)?).map_err(|e| format!("header: {e}"))?;
    let count = c.u32()? as usize;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let name_len = c.u32()? as usize;
        let name = String::from_utf8(c.take(name_len)?.to_vec()).map_err(|_| "tensor name is not UTF-8")?;
        let rank = c.u32()? as usize;
        let shape = (0..rank).map(|_| c.len()).collect::<std::result::Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("tensor size overflows")?;
        let raw = c.take(n.checked_mul(8).ok_or("tensor size overflows")?)?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
        let t = Tensor::new(shape, data).map_err(|e| format!("tensor {name}: {e}"))?;
        tensors.push((name, t));
    }
    if c.at != bytes.len() {
        return Err("trailing bytes after tensors".into());
    }
    Ok((header, tensors))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| CliError::Output { path: path.to_path_buf(), source })
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Checkpoint { path: path.to_path_buf(), detail: e.to_string() })
}

pub fn save_model(path: &Path, model: &Model, experiment: &ExperimentConfig) -> Result<()> {
    let header = EmbedderHeader { model: model.config().clone(), experiment: experiment.clone() };
    let tensors: Vec<(String, Tensor)> = model.params().iter().map(|p| (p.name.clone(), p.tensor.clone())).collect();
    write(path, &encode(CheckpointKind::Embedder, &header, &tensors))
}

pub fn load_model(path: &Path) -> Result<(Model, ExperimentConfig)> {
    let bad = |detail: String| CliError::Checkpoint { path: path.to_path_buf(), detail };
    let (header, tensors): (EmbedderHeader, _) = decode(&read(path)?, CheckpointKind::Embedder).map_err(bad)?;
    let model = Model::from_params(&header.model, tensors).map_err(|e| bad(e.to_string()))?;
    Ok((model, header.experiment))
}

pub fn save_partitioner(path: &Path, p: &Partitioner) -> Result<()> {
    write(path, &encode(CheckpointKind::Partitioner, &PartitionerHeader { kind: p.kind() }, &p.to_tensors()))
}

pub fn load_partitioner(path: &Path) -> Result<Partitioner> {
    let bad = |detail: String| CliError::Checkpoint { path: path.to_path_buf(), detail };
    let (header, tensors): (PartitionerHeader, _) = decode(&read(path)?, CheckpointKind::Partitioner).map_err(bad)?;
    Partitioner::from_tensors(header.kind, &tensors).map_err(|e| bad(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let t = Tensor::new(vec![2, 3], vec![1.0, -2.5, 3.0, f64::MIN_POSITIVE, 0.0, 1e300]).unwrap();
        let h = PartitionerHeader { kind: PartitionerKind::Svm };
        let bytes = encode(CheckpointKind::Partitioner, &h, &[("w".into(), t.clone())]);
        let (back, tensors): (PartitionerHeader, _) = decode(&bytes, CheckpointKind::Partitioner).unwrap();
        assert_eq!(back, h);
        assert_eq!(tensors[0].0, "w");
        assert_eq!(tensors[0].1.data(), t.data());
        assert_eq!(tensors[0].1.shape(), t.shape());
    }

    #[test]
    fn corrupt_input_rejected() {
        let h = PartitionerHeader { kind: PartitionerKind::Knn };
        let bytes = encode(CheckpointKind::Partitioner, &h, &[("w".into(), Tensor::scalar(1.0))]);
        assert!(decode::<PartitionerHeader>(&bytes[..bytes.len() - 1], CheckpointKind::Partitioner).is_err());
        assert!(decode::<PartitionerHeader>(&bytes, CheckpointKind::Embedder).is_err());
        assert!(decode::<PartitionerHeader>(b"garbage", CheckpointKind::Partitioner).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode::<PartitionerHeader>(&extra, CheckpointKind::Partitioner).is_err());
    }
}
