//! Corpus records, JSON-lines manifests, partitioning and the synthetic toy corpus.

pub mod toy;

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Waveform;

pub use toy::{generate_toy_corpus, synthesize_toy_utterance, ToyCorpusSpec, ToyVoice, TOY_PHRASES};

pub const DEFAULT_MAX_DURATION_S: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Style {
    Normal,
    Lombard,
}

impl std::fmt::Display for Style {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Style::Normal => "normal",
            Style::Lombard => "lombard",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceRecord {
    pub id: String,
    /// Relative paths resolve against the manifest's directory.
    pub audio_path: PathBuf,
    pub text: String,
    pub speaker: String,
    pub style: Style,
    pub duration_s: f64,
}

impl UtteranceRecord {
    pub fn resolved_audio_path(&self, base_dir: &Path) -> PathBuf {
        if self.audio_path.is_absolute() {
            self.audio_path.clone()
        } else {
            base_dir.join(&self.audio_path)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ManifestLine {
    #[serde(flatten)]
    record: UtteranceRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<UtteranceRecord>,
    pub split_assignment: BTreeMap<String, Split>,
    pub base_dir: PathBuf,
}

impl CorpusManifest {
    /// Every record lands in the training split.
    pub fn all_train(records: Vec<UtteranceRecord>, base_dir: PathBuf) -> Result<Self> {
        let split_assignment = records.iter().map(|r| (r.id.clone(), Split::Train)).collect();
        let m = CorpusManifest {
            records,
            split_assignment,
            base_dir,
        };
        m.validate_ids()?;
        Ok(m)
    }

    fn validate_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateId(r.id.clone()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split_of(&self, id: &str) -> Option<Split> {
        self.split_assignment.get(id).copied()
    }

    pub fn split(&self, split: Split) -> Vec<&UtteranceRecord> {
        self.records
            .iter()
            .filter(|r| self.split_of(&r.id) == Some(split))
            .collect()
    }

    pub fn split_sizes(&self) -> (usize, usize, usize) {
        let count = |s| self.split_assignment.values().filter(|&&v| v == s).count();
        (count(Split::Train), count(Split::Valid), count(Split::Test))
    }

    pub fn get(&self, id: &str) -> Option<&UtteranceRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    pub fn audio_path(&self, record: &UtteranceRecord) -> PathBuf {
        record.resolved_audio_path(&self.base_dir)
    }

    /// Reads and validates (mono / 16 kHz / 16-bit) the record's audio.
    pub fn load_audio(&self, record: &UtteranceRecord) -> Result<Waveform> {
        crate::wav::read_wav(&self.audio_path(record))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut out = Vec::new();
        for r in &self.records {
            let line = ManifestLine {
                record: r.clone(),
                split: self.split_of(&r.id),
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n").expect("vec write");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }
}

/// Parses a JSON-lines manifest. Audio files must exist; their headers are
/// validated when first loaded. Lines without a `split` field are assigned to
/// training only if no line carries one.
pub fn load_manifest(path: &Path) -> Result<CorpusManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let bad = |line: usize, reason: String| Error::Manifest {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut records = Vec::new();
    let mut splits = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ManifestLine =
            serde_json::from_str(line).map_err(|e| bad(i + 1, e.to_string()))?;
        let r = parsed.record;
        if !seen.insert(r.id.clone()) {
            return Err(Error::DuplicateId(r.id));
        }
        if r.text.trim().is_empty() {
            return Err(bad(i + 1, format!("record `{}` has empty text", r.id)));
        }
        if !(r.duration_s > 0.0) {
            return Err(bad(i + 1, format!("record `{}` has non-positive duration", r.id)));
        }
        let audio = r.resolved_audio_path(&base_dir);
        if !audio.exists() {
            return Err(Error::MissingAudio(audio));
        }
        splits.push(parsed.split);
        records.push(r);
    }
    let any_split = splits.iter().any(Option::is_some);
    let mut split_assignment = BTreeMap::new();
    for (r, s) in records.iter().zip(&splits) {
        let s = match (s, any_split) {
            (Some(s), _) => *s,
            (None, false) => Split::Train,
            (None, true) => {
                return Err(Error::Manifest {
                    path: path.to_path_buf(),
                    line: 0,
                    reason: format!("record `{}` has no split while others do", r.id),
                })
            }
        };
        split_assignment.insert(r.id.clone(), s);
    }
    Ok(CorpusManifest {
        records,
        split_assignment,
        base_dir,
    })
}

/// Seeded permutation followed by slicing into (train, valid, test). Records
/// beyond the requested total are left out of the returned manifest.
pub fn partition_corpus(
    records: &[UtteranceRecord],
    sizes: (usize, usize, usize),
    seed: u64,
    base_dir: PathBuf,
) -> Result<CorpusManifest> {
    let (tr, va, te) = sizes;
    let requested = tr + va + te;
    if requested > records.len() {
        return Err(Error::PartitionShortfall {
            requested,
            available: records.len(),
        });
    }
    let mut order: Vec<usize> = (0..records.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut split_assignment = BTreeMap::new();
    for (pos, &i) in order.iter().take(requested).enumerate() {
        let s = if pos < tr {
            Split::Train
        } else if pos < tr + va {
            Split::Valid
        } else {
            Split::Test
        };
        split_assignment.insert(records[i].id.clone(), s);
    }
    let selected: Vec<UtteranceRecord> = records
        .iter()
        .filter(|r| split_assignment.contains_key(&r.id))
        .cloned()
        .collect();
    let m = CorpusManifest {
        records: selected,
        split_assignment,
        base_dir,
    };
    m.validate_ids()?;
    Ok(m)
}

pub fn filter_duration_outliers(records: &[UtteranceRecord], max_duration_s: f64) -> Vec<UtteranceRecord> {
    records
        .iter()
        .filter(|r| r.duration_s <= max_duration_s)
        .cloned()
        .collect()
}
