use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ModelConfig, ParamStore, TensorF};

pub const CHECKPOINT_MAGIC: [u8; 8] = *b"DOCRECW\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("{0}")]
    Io(String),
    #[error("not a checkpoint file")]
    BadMagic,
    #[error("checkpoint version {found} is not supported (expected {CHECKPOINT_VERSION})")]
    UnsupportedVersion { found: u32 },
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),
}

impl From<std::io::Error> for CheckpointError {
    fn from(e: std::io::Error) -> Self {
        CheckpointError::Io(e.to_string())
    }
}

/// Everything besides the weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    /// `document` or `line`.
    pub kind: String,
    pub config: ModelConfig,
    /// Grammar definition in its text format.
    pub grammar: String,
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Versioned container: magic, version, JSON header, then named tensors
/// stored as little-endian 32-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, TensorF)>,
}

fn u32_le(r: &mut impl Read) -> Result<u32, CheckpointError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| CheckpointError::Corrupt("truncated".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn bytes(r: &mut impl Read, n: usize) -> Result<Vec<u8>, CheckpointError> {
    let mut b = vec![0u8; n];
    r.read_exact(&mut b).map_err(|_| CheckpointError::Corrupt("truncated".into()))?;
    Ok(b)
}

impl Checkpoint {
    pub fn new(header: CheckpointHeader, params: &ParamStore) -> Self {
        Checkpoint {
            header,
            tensors: params.iter().map(|(n, t)| (n.to_string(), t.clone())).collect(),
        }
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), CheckpointError> {
        w.write_all(&CHECKPOINT_MAGIC)?;
        w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let header = serde_json::to_vec(&self.header).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        w.write_all(&(header.len() as u32).to_le_bytes())?;
        w.write_all(&header)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, t) in &self.tensors {
            w.write_all(&(name.len() as u32).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&(t.shape().len() as u32).to_le_bytes())?;
            for &d in t.shape() {
                w.write_all(&(d as u32).to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(4 * t.len());
            for &v in t.data() {
                buf.extend_from_slice(&(v as f32).to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| CheckpointError::BadMagic)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = u32_le(r)?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::UnsupportedVersion { found: version });
        }
        let n = u32_le(r)? as usize;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes(r, n)?).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
        let count = u32_le(r)?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let n = u32_le(r)? as usize;
            let name = String::from_utf8(bytes(r, n)?).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
            let ndim = u32_le(r)?;
            let shape = (0..ndim).map(|_| u32_le(r).map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
            let len: usize = shape.iter().product();
            let raw = bytes(r, 4 * len)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            let t = TensorF::new(shape, data).map_err(|e| CheckpointError::Corrupt(e.to_string()))?;
            tensors.push((name, t));
        }
        Ok(Checkpoint { header, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CheckpointError> {
        let mut f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(&mut f)
    }

    /// Parameters in stored order.
    pub fn params(&self) -> ParamStore {
        let mut p = ParamStore::new();
        for (n, t) in &self.tensors {
            p.add(n.clone(), t.clone());
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut p = ParamStore::new();
        p.add("a", TensorF::new(vec![2, 2], vec![0.5, -1.25, 3.0, 0.0]).unwrap());
        p.add("b.bias", TensorF::new(vec![3], vec![1.0, 2.0, 4.0]).unwrap());
        let header = CheckpointHeader {
            kind: "document".into(),
            config: ModelConfig::tiny(12),
            grammar: "g".into(),
            meta: serde_json::json!({"step": 3}),
        };
        Checkpoint::new(header, &p)
    }

    #[test]
    fn round_trip() {
        let c = sample();
        let mut buf = Vec::new();
        c.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..8], b"DOCRECW\0");
        assert_eq!(Checkpoint::read_from(&mut buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn rejects_foreign_and_future_files() {
        let mut buf = Vec::new();
        sample().write_to(&mut buf).unwrap();
        let mut wrong = buf.clone();
        wrong[0] = b'X';
        assert_eq!(Checkpoint::read_from(&mut wrong.as_slice()), Err(CheckpointError::BadMagic));
        let mut future = buf.clone();
        future[8] = 9;
        assert_eq!(
            Checkpoint::read_from(&mut future.as_slice()),
            Err(CheckpointError::UnsupportedVersion { found: 9 })
        );
        buf.truncate(buf.len() - 2);
        assert!(matches!(Checkpoint::read_from(&mut buf.as_slice()), Err(CheckpointError::Corrupt(_))));
    }
}
