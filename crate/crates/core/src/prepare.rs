//! Batch feature extraction with content-hash skipping and per-corpus
//! normalization statistics.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::{CorpusManifest, Split, UtteranceRecord};
use crate::error::{Error, Result};
use crate::features::io::{read_features, read_header, write_features, write_stats, FeatureHeader, FeatureKind};
use crate::features::{extract_mel, extract_world_like, NormKind, NormalizationStats, OutputKind, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    Mel,
    World,
    Both,
}

impl FeatureSet {
    pub fn kinds(self) -> &'static [OutputKind] {
        match self {
            FeatureSet::Mel => &[OutputKind::Mel],
            FeatureSet::World => &[OutputKind::World],
            FeatureSet::Both => &[OutputKind::Mel, OutputKind::World],
        }
    }
}

impl std::str::FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mel" => Ok(FeatureSet::Mel),
            "world" => Ok(FeatureSet::World),
            "both" => Ok(FeatureSet::Both),
            other => Err(Error::Config(format!("unknown feature set `{other}`"))),
        }
    }
}

fn file_kind(kind: OutputKind) -> FeatureKind {
    match kind {
        OutputKind::Mel => FeatureKind::Mel,
        OutputKind::World => FeatureKind::World,
    }
}

pub fn feature_stem(dir: &Path, kind: OutputKind, id: &str) -> PathBuf {
    dir.join(kind.to_string()).join(id)
}

pub fn stats_path(dir: &Path, kind: OutputKind) -> PathBuf {
    dir.join(format!("{kind}_stats.json"))
}

pub fn extract(wave: &Waveform, kind: OutputKind) -> Result<Array2<f32>> {
    Ok(match kind {
        OutputKind::Mel => extract_mel(wave)?.frames,
        OutputKind::World => extract_world_like(wave)?.to_matrix(),
    })
}

fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Cached features for `record` when present and up to date, otherwise a
/// fresh extraction from its audio.
pub fn load_or_extract(
    manifest: &CorpusManifest,
    record: &UtteranceRecord,
    kind: OutputKind,
    features_dir: Option<&Path>,
) -> Result<Array2<f32>> {
    if let Some(dir) = features_dir {
        let stem = feature_stem(dir, kind, &record.id);
        if let Ok(header) = read_header(&stem) {
            let fresh = header.source_sha256.as_deref() == Some(sha256_hex(&manifest.audio_path(record))?.as_str());
            if fresh {
                return Ok(read_features(&stem)?.0);
            }
        }
    }
    extract(&manifest.load_audio(record)?, kind)
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PrepareReport {
    pub extracted: Vec<String>,
    pub skipped: Vec<String>,
    /// `(id, reason)` for records whose audio could not be processed.
    pub failures: Vec<(String, String)>,
}

/// Writes `<out>/<kind>/<id>.{f32,json}` for every record and
/// `<out>/<kind>_stats.json` (mean-variance over the training split).
/// Records whose audio hash matches the existing sidecar are not re-extracted.
pub fn prepare_features(manifest: &CorpusManifest, out_dir: &Path, set: FeatureSet) -> Result<PrepareReport> {
    let mut report = PrepareReport::default();
    for &kind in set.kinds() {
        let mut train = Vec::new();
        for record in &manifest.records {
            let stem = feature_stem(out_dir, kind, &record.id);
            let audio = manifest.audio_path(record);
            let hash = match sha256_hex(&audio) {
                Ok(h) => h,
                Err(e) => {
                    report.failures.push((record.id.clone(), e.to_string()));
                    continue;
                }
            };
            let up_to_date = read_header(&stem).is_ok_and(|h| h.source_sha256.as_deref() == Some(hash.as_str()));
            let data = if up_to_date {
                report.skipped.push(record.id.clone());
                read_features(&stem)?.0
            } else {
                let data = match manifest.load_audio(record).and_then(|w| extract(&w, kind)) {
                    Ok(d) => d,
                    Err(e) => {
                        report.failures.push((record.id.clone(), e.to_string()));
                        continue;
                    }
                };
                let header = FeatureHeader {
                    shape: [data.nrows(), data.ncols()],
                    frame_shift_ms: kind.frame_shift_ms(),
                    kind: file_kind(kind),
                    source_sha256: Some(hash),
                };
                write_features(&stem, &data, &header)?;
                report.extracted.push(record.id.clone());
                data
            };
            if manifest.split_of(&record.id) == Some(Split::Train) {
                train.push(data);
            }
        }
        if !train.is_empty() {
            let views: Vec<_> = train.iter().map(|m| m.view()).collect();
            let stats = NormalizationStats::fit_pooled(NormKind::MeanVar, &views)?;
            write_stats(&stats_path(out_dir, kind), &stats)?;
        }
    }
    Ok(report)
}
