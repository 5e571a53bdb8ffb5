//! Feature files: raw little-endian f32, row-major, plus a JSON sidecar
//! `{"shape":[T,D],"frame_shift_ms":x,"kind":...}`.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::NormalizationStats;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Mel,
    World,
    Alignment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureHeader {
    pub shape: [usize; 2],
    pub frame_shift_ms: f32,
    pub kind: FeatureKind,
    /// Content hash of the source audio, used to skip up-to-date extractions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_sha256: Option<String>,
}

pub fn feature_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("f32"), stem.with_extension("json"))
}

pub fn write_features(stem: &Path, data: &Array2<f32>, header: &FeatureHeader) -> Result<()> {
    if header.shape != [data.nrows(), data.ncols()] {
        return Err(Error::Shape(format!(
            "header shape {:?} does not match data {:?}",
            header.shape,
            data.dim()
        )));
    }
    let (bin, json) = feature_paths(stem);
    if let Some(parent) = bin.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data.iter() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))?;
    std::fs::write(&json, serde_json::to_vec_pretty(header)?).map_err(|e| Error::io(&json, e))
}

pub fn read_header(stem: &Path) -> Result<FeatureHeader> {
    let (_, json) = feature_paths(stem);
    let text = std::fs::read(&json).map_err(|e| Error::io(&json, e))?;
    Ok(serde_json::from_slice(&text)?)
}

pub fn read_features(stem: &Path) -> Result<(Array2<f32>, FeatureHeader)> {
    let header = read_header(stem)?;
    let (bin, _) = feature_paths(stem);
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let [t, d] = header.shape;
    if bytes.len() != t * d * 4 {
        return Err(Error::Shape(format!(
            "{}: expected {} bytes, found {}",
            bin.display(),
            t * d * 4,
            bytes.len()
        )));
    }
    let values: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let data = Array2::from_shape_vec((t, d), values).map_err(|e| Error::Shape(e.to_string()))?;
    Ok((data, header))
}

pub fn write_stats(path: &Path, stats: &NormalizationStats) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(stats)?).map_err(|e| Error::io(path, e))
}

pub fn read_stats(path: &Path) -> Result<NormalizationStats> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("utt");
        let data = Array2::from_shape_fn((3, 4), |(i, j)| i as f32 * 10.0 + j as f32 - 0.25);
        let header = FeatureHeader {
            shape: [3, 4],
            frame_shift_ms: 5.0,
            kind: FeatureKind::World,
            source_sha256: None,
        };
        write_features(&stem, &data, &header).unwrap();
        let raw = std::fs::read(stem.with_extension("f32")).unwrap();
        assert_eq!(&raw[..4], &(-0.25f32).to_le_bytes());
        let (back, h) = read_features(&stem).unwrap();
        assert_eq!(back, data);
        assert_eq!(h, header);
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(stem.with_extension("json")).unwrap()).unwrap();
        assert_eq!(json["kind"], "world");
        assert_eq!(json["shape"], serde_json::json!([3, 4]));
    }
}
