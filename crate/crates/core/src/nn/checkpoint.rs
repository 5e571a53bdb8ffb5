//! Single-file model archive: magic, JSON header, little-endian `f32` payload.
//!
//! ```text
//! b"LMBDCKPT" | u64 LE header length | header JSON | f32 LE tensors in header order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{ParamSet, TensorShape};
use crate::error::{Error, Result};
use crate::scalar::Float;

const MAGIC: &[u8; 8] = b"LMBDCKPT";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Seq2seq,
    Lstm,
    Duration,
    Wavenet,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Seq2seq => "seq2seq",
            ModelKind::Lstm => "lstm",
            ModelKind::Duration => "duration",
            ModelKind::Wavenet => "wavenet",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seq2seq" => Ok(ModelKind::Seq2seq),
            "lstm" => Ok(ModelKind::Lstm),
            "duration" => Ok(ModelKind::Duration),
            "wavenet" => Ok(ModelKind::Wavenet),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: serde_json::Value,
    /// Free-form: normalization statistics, inventory, stage history.
    pub metadata: serde_json::Value,
    pub params: ParamSet<f32>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    kind: ModelKind,
    config: serde_json::Value,
    metadata: serde_json::Value,
    tensors: Vec<TensorShape>,
}

impl Checkpoint {
    pub fn new<T: Float>(
        kind: ModelKind,
        config: serde_json::Value,
        metadata: serde_json::Value,
        params: &ParamSet<T>,
    ) -> Self {
        Checkpoint {
            kind,
            config,
            metadata,
            params: params.cast(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format_version: FORMAT_VERSION,
            kind: self.kind,
            config: self.config.clone(),
            metadata: self.metadata.clone(),
            tensors: self.params.shapes(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + 4 * self.params.n_scalars());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in self.params.iter() {
            for v in t.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        if header.format_version != FORMAT_VERSION {
            return Err(bad(&format!(
                "unsupported format version {}",
                header.format_version
            )));
        }
        let mut payload = &bytes[16 + hlen..];
        let mut params = ParamSet::new();
        for TensorShape { name, shape } in header.tensors {
            let n = shape[0] * shape[1];
            let mut data = vec![0f32; n];
            let mut buf = [0u8; 4];
            for v in &mut data {
                payload
                    .read_exact(&mut buf)
                    .map_err(|_| bad(&format!("payload truncated in tensor {name}")))?;
                *v = f32::from_le_bytes(buf);
            }
            let arr = Array2::from_shape_vec((shape[0], shape[1]), data)
                .map_err(|e| bad(&e.to_string()))?;
            params.insert(name, arr);
        }
        if !payload.is_empty() {
            return Err(bad("trailing bytes after payload"));
        }
        Ok(Checkpoint {
            kind: header.kind,
            config: header.config,
            metadata: header.metadata,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn params_as<T: Float>(&self) -> ParamSet<T> {
        self.params.cast()
    }
}

/// Lists every tensor whose presence or shape differs between the two sets.
pub fn shape_mismatches<A: Float, B: Float>(
    expected: &ParamSet<A>,
    found: &ParamSet<B>,
) -> Vec<String> {
    let mut out = Vec::new();
    for (name, t) in expected.iter() {
        match found.get(name) {
            None => out.push(format!("{name}: missing")),
            Some(f) if f.dim() != t.dim() => out.push(format!(
                "{name}: expected {:?}, found {:?}",
                t.dim(),
                f.dim()
            )),
            Some(_) => {}
        }
    }
    for (name, _) in found.iter() {
        if expected.get(name).is_none() {
            out.push(format!("{name}: unexpected"));
        }
    }
    out
}

pub fn ensure_compatible<A: Float, B: Float>(
    expected: &ParamSet<A>,
    found: &ParamSet<B>,
) -> Result<()> {
    let mismatches = shape_mismatches(expected, found);
    if mismatches.is_empty() {
        Ok(())
    } else {
        Err(Error::IncompatibleCheckpoint { mismatches })
    }
}
