//! Stimulus construction, the test manifest served to raters, and the
//! ratings log.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::Style;
use crate::error::{Error, Result};
use crate::features::Waveform;
use crate::wav::{read_wav, write_wav};

pub const DEFAULT_GAP_S: f64 = 0.5;
pub const DEFAULT_UTTERANCES_PER_SYSTEM: usize = 16;
pub const DEFAULT_PROBE_RATE: f64 = 0.1;
pub const RATINGS_HEADER: [&str; 5] = ["pair_id", "listener_id", "test_kind", "value", "timestamp_iso8601"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    Similarity,
    Ccr,
}

impl TestKind {
    pub fn value_range(self) -> std::ops::RangeInclusive<i32> {
        match self {
            TestKind::Similarity => 0..=3,
            TestKind::Ccr => -3..=3,
        }
    }
}

impl std::fmt::Display for TestKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TestKind::Similarity => "similarity",
            TestKind::Ccr => "ccr",
        })
    }
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "similarity" => Ok(TestKind::Similarity),
            "ccr" => Ok(TestKind::Ccr),
            other => Err(Error::Config(format!("unknown test kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    System,
    NullPair,
    CorruptedAnchor,
}

/// The four similarity answers, coded 0..=3 from "same, sure" to
/// "different, sure".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilarityCategory {
    SameSure,
    SameUnsure,
    DiffUnsure,
    DiffSure,
}

impl SimilarityCategory {
    pub const ALL: [SimilarityCategory; 4] = [
        SimilarityCategory::SameSure,
        SimilarityCategory::SameUnsure,
        SimilarityCategory::DiffUnsure,
        SimilarityCategory::DiffSure,
    ];
    /// Stacking order of the similarity chart, bottom to top.
    pub const LEGEND_ORDER: [SimilarityCategory; 4] = [
        SimilarityCategory::DiffSure,
        SimilarityCategory::DiffUnsure,
        SimilarityCategory::SameUnsure,
        SimilarityCategory::SameSure,
    ];

    pub fn code(self) -> i32 {
        self as i32
    }

    pub fn from_code(v: i32) -> Option<Self> {
        usize::try_from(v).ok().and_then(|i| Self::ALL.get(i).copied())
    }

    pub fn label(self) -> &'static str {
        match self {
            SimilarityCategory::SameSure => "Same: Absolutely sure",
            SimilarityCategory::SameUnsure => "Same: Not sure",
            SimilarityCategory::DiffUnsure => "Different: Not sure",
            SimilarityCategory::DiffSure => "Different: Absolutely sure",
        }
    }

    pub fn is_same(self) -> bool {
        matches!(self, SimilarityCategory::SameSure | SimilarityCategory::SameUnsure)
    }
}

pub fn reference_label(style: Style) -> String {
    format!("ref_{style}")
}

pub const ANCHOR_LABEL: &str = "anchor";

/// One stimulus: two utterances played back to back.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusPair {
    pub id: String,
    pub test_kind: TestKind,
    pub probe_kind: ProbeKind,
    /// Paths relative to the manifest directory.
    pub first_audio: PathBuf,
    pub second_audio: PathBuf,
    pub stitched_audio: PathBuf,
    pub gap_s: f64,
    /// Who produced each half: a system id, `ref_normal`/`ref_lombard`, or `anchor`.
    pub first_label: String,
    pub second_label: String,
    /// System under test (system pairs only).
    #[serde(default)]
    pub system: Option<String>,
    /// Natural reference style the pair is judged against.
    pub reference_style: Style,
    pub utterance_id: String,
    /// CCR only: the system was played first.
    #[serde(default)]
    pub swapped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestManifest {
    pub seed: u64,
    pub gap_s: f64,
    pub sample_rate: u32,
    pub pairs: Vec<StimulusPair>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl TestManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut m: TestManifest = serde_json::from_slice(&bytes)?;
        m.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn pair(&self, id: &str) -> Option<&StimulusPair> {
        self.pairs.iter().find(|p| p.id == id)
    }

    pub fn pair_index(&self) -> BTreeMap<&str, &StimulusPair> {
        self.pairs.iter().map(|p| (p.id.as_str(), p)).collect()
    }

    pub fn stitched_path(&self, pair: &StimulusPair) -> PathBuf {
        self.base_dir.join(&pair.stitched_audio)
    }

    pub fn count(&self, kind: TestKind, probe: ProbeKind) -> usize {
        self.pairs.iter().filter(|p| p.test_kind == kind && p.probe_kind == probe).count()
    }
}

/// Synthesized audio of one system, keyed by utterance id.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemStimuli {
    pub system: String,
    pub audio: BTreeMap<String, PathBuf>,
}

/// Natural recordings of one test sentence in both styles.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceAudio {
    pub utterance_id: String,
    pub normal: PathBuf,
    pub lombard: PathBuf,
}

impl ReferenceAudio {
    pub fn path(&self, style: Style) -> &Path {
        match style {
            Style::Normal => &self.normal,
            Style::Lombard => &self.lombard,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSetConfig {
    pub utterances_per_system: usize,
    /// Screening probes per test, as a fraction of its system pairs.
    pub probe_rate: f64,
    pub gap_s: f64,
    pub seed: u64,
    /// Systems that also enter the CCR test.
    pub ccr_systems: Vec<String>,
    /// Natural reference each CCR system is paired with.
    pub ccr_reference: Style,
}

impl Default for TestSetConfig {
    fn default() -> Self {
        TestSetConfig {
            utterances_per_system: DEFAULT_UTTERANCES_PER_SYSTEM,
            probe_rate: DEFAULT_PROBE_RATE,
            gap_s: DEFAULT_GAP_S,
            seed: 0,
            ccr_systems: vec!["S1".into(), "S3".into(), "S5".into()],
            ccr_reference: Style::Lombard,
        }
    }
}

/// `first`, `gap_s` of digital silence, then `second`.
pub fn stitch(first: &Waveform, second: &Waveform, gap_s: f64) -> Result<Waveform> {
    if first.sample_rate != second.sample_rate {
        return Err(Error::Config("cannot stitch audio with different sample rates".into()));
    }
    let gap = (gap_s * first.sample_rate as f64).round() as usize;
    let mut samples = Vec::with_capacity(first.len() + gap + second.len());
    samples.extend_from_slice(&first.samples);
    samples.resize(first.len() + gap, 0.0);
    samples.extend_from_slice(&second.samples);
    Ok(Waveform { samples, sample_rate: first.sample_rate })
}

/// Screening anchor: the reference buried in white noise at 0 dB SNR and
/// hard-clipped.
pub fn corrupt_anchor(wave: &Waveform, seed: u64) -> Waveform {
    let rms = (wave.samples.iter().map(|v| (*v as f64).powi(2)).sum::<f64>() / wave.len().max(1) as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let clip = (3.0 * rms).max(1e-3) as f32;
    let samples = wave
        .samples
        .iter()
        .map(|&v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            (v + (n * rms) as f32).clamp(-clip, clip)
        })
        .collect();
    let mut w = Waveform { samples, sample_rate: wave.sample_rate };
    w.limit_peak();
    w
}

fn probe_counts(n_system_pairs: usize, rate: f64) -> (usize, usize) {
    let total = (n_system_pairs as f64 * rate).ceil() as usize;
    if total == 0 {
        return (0, 0);
    }
    let nulls = total.div_ceil(2);
    (nulls, (total - nulls).max(1))
}

struct Draft {
    kind: TestKind,
    probe: ProbeKind,
    first: (String, PathBuf),
    second: (String, PathBuf),
    system: Option<String>,
    style: Style,
    utterance: String,
    swapped: bool,
}

fn relative(base: &Path, p: &Path) -> PathBuf {
    p.strip_prefix(base).map(Path::to_path_buf).unwrap_or_else(|_| p.to_path_buf())
}

/// Draws the utterances, lays out similarity pairs against both natural
/// styles and CCR pairs against `config.ccr_reference`, mixes in null pairs
/// and corrupted anchors, writes the stitched stimuli under `out_dir`, and
/// returns the manifest (also saved as `out_dir/manifest.json`).
pub fn build_test_set(
    systems: &[SystemStimuli],
    references: &[ReferenceAudio],
    config: &TestSetConfig,
    out_dir: &Path,
) -> Result<TestManifest> {
    if systems.is_empty() {
        return Err(Error::Empty("no systems for the listening test"));
    }
    if !(0.0..1.0).contains(&config.probe_rate) || !(config.gap_s >= 0.0) {
        return Err(Error::Config("probe rate must be in [0, 1) and the gap non-negative".into()));
    }
    let refs: BTreeMap<&str, &ReferenceAudio> = references.iter().map(|r| (r.utterance_id.as_str(), r)).collect();
    for r in references {
        for p in [&r.normal, &r.lombard] {
            if !p.exists() {
                return Err(Error::MissingAudio(p.clone()));
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut sim = Vec::new();
    let mut ccr = Vec::new();
    for s in systems {
        let mut usable: Vec<&str> = s.audio.keys().map(String::as_str).filter(|u| refs.contains_key(u)).collect();
        if usable.len() < config.utterances_per_system {
            return Err(Error::Insufficient(format!(
                "system {} has {} utterances with references, {} requested",
                s.system,
                usable.len(),
                config.utterances_per_system
            )));
        }
        usable.shuffle(&mut rng);
        usable.truncate(config.utterances_per_system);
        usable.sort_unstable();
        for u in usable {
            let audio = &s.audio[u];
            if !audio.exists() {
                return Err(Error::MissingAudio(audio.clone()));
            }
            for style in [Style::Normal, Style::Lombard] {
                sim.push(Draft {
                    kind: TestKind::Similarity,
                    probe: ProbeKind::System,
                    first: (reference_label(style), refs[u].path(style).to_path_buf()),
                    second: (s.system.clone(), audio.clone()),
                    system: Some(s.system.clone()),
                    style,
                    utterance: u.to_string(),
                    swapped: false,
                });
            }
            if config.ccr_systems.contains(&s.system) {
                let style = config.ccr_reference;
                let r = (reference_label(style), refs[u].path(style).to_path_buf());
                let sys = (s.system.clone(), audio.clone());
                let swapped = rng.random_bool(0.5);
                let (first, second) = if swapped { (sys, r) } else { (r, sys) };
                ccr.push(Draft {
                    kind: TestKind::Ccr,
                    probe: ProbeKind::System,
                    first,
                    second,
                    system: Some(s.system.clone()),
                    style,
                    utterance: u.to_string(),
                    swapped,
                });
            }
        }
    }

    let anchors_dir = out_dir.join("anchors");
    let ref_ids: Vec<&str> = refs.keys().copied().collect();
    let mut anchor_cache: BTreeMap<(String, Style), PathBuf> = BTreeMap::new();
    let mut probes = |drafts: &mut Vec<Draft>, kind: TestKind, rng: &mut ChaCha8Rng| -> Result<()> {
        let (nulls, anchors) = probe_counts(drafts.len(), config.probe_rate);
        if ref_ids.is_empty() {
            return Ok(());
        }
        for i in 0..nulls + anchors {
            let u = ref_ids[rng.random_range(0..ref_ids.len())];
            let style = match kind {
                TestKind::Similarity => [Style::Normal, Style::Lombard][rng.random_range(0..2)],
                TestKind::Ccr => config.ccr_reference,
            };
            let r = (reference_label(style), refs[u].path(style).to_path_buf());
            let (probe, second) = if i < nulls {
                (ProbeKind::NullPair, r.clone())
            } else {
                let key = (u.to_string(), style);
                let path = match anchor_cache.get(&key) {
                    Some(p) => p.clone(),
                    None => {
                        let p = anchors_dir.join(format!("{u}_{style}.wav"));
                        let seed = config.seed ^ (anchor_cache.len() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
                        write_wav(&p, &corrupt_anchor(&read_wav(&r.1)?, seed))?;
                        anchor_cache.insert(key, p.clone());
                        p
                    }
                };
                (ProbeKind::CorruptedAnchor, (ANCHOR_LABEL.to_string(), path))
            };
            drafts.push(Draft {
                kind,
                probe,
                first: r,
                second,
                system: None,
                style,
                utterance: u.to_string(),
                swapped: false,
            });
        }
        drafts.shuffle(rng);
        Ok(())
    };
    probes(&mut sim, TestKind::Similarity, &mut rng)?;
    probes(&mut ccr, TestKind::Ccr, &mut rng)?;

    let stim_dir = out_dir.join("stimuli");
    let mut pairs = Vec::with_capacity(sim.len() + ccr.len());
    let mut sample_rate = crate::features::SAMPLE_RATE;
    for (prefix, drafts) in [("s", sim), ("c", ccr)] {
        for (i, d) in drafts.into_iter().enumerate() {
            let id = format!("{prefix}{:04}", i + 1);
            let first = read_wav(&d.first.1)?;
            let second = read_wav(&d.second.1)?;
            let stitched = stitch(&first, &second, config.gap_s)?;
            sample_rate = stitched.sample_rate;
            let path = stim_dir.join(format!("{id}.wav"));
            write_wav(&path, &stitched)?;
            pairs.push(StimulusPair {
                id,
                test_kind: d.kind,
                probe_kind: d.probe,
                first_audio: relative(out_dir, &d.first.1),
                second_audio: relative(out_dir, &d.second.1),
                stitched_audio: relative(out_dir, &path),
                gap_s: config.gap_s,
                first_label: d.first.0,
                second_label: d.second.0,
                system: d.system,
                reference_style: d.style,
                utterance_id: d.utterance,
                swapped: d.swapped,
            });
        }
    }
    let manifest = TestManifest { seed: config.seed, gap_s: config.gap_s, sample_rate, pairs, base_dir: out_dir.to_path_buf() };
    manifest.save(&out_dir.join("manifest.json"))?;
    Ok(manifest)
}

/// One listener judgment as stored in the ratings CSV.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RatingRecord {
    pub pair_id: String,
    pub listener_id: String,
    pub test_kind: TestKind,
    pub value: i32,
    #[serde(rename = "timestamp_iso8601")]
    pub timestamp: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub field: &'static str,
    pub message: String,
}

/// Checks a rating against the manifest; returns every problem found.
pub fn validate_rating(manifest: &TestManifest, r: &RatingRecord) -> std::result::Result<(), Vec<FieldError>> {
    let mut errs = Vec::new();
    let mut err = |field, message: String| errs.push(FieldError { field, message });
    match manifest.pair(&r.pair_id) {
        None => err("pair_id", format!("unknown pair `{}`", r.pair_id)),
        Some(p) if p.test_kind != r.test_kind => {
            err("test_kind", format!("pair `{}` belongs to the {} test", r.pair_id, p.test_kind))
        }
        Some(_) => {}
    }
    let listener_ok = !r.listener_id.is_empty()
        && r.listener_id.len() <= 128
        && r.listener_id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c));
    if !listener_ok {
        err("listener_id", "must be 1-128 characters of [A-Za-z0-9._-]".into());
    }
    let range = r.test_kind.value_range();
    if !range.contains(&r.value) {
        err("value", format!("{} ratings must lie in {}..={}", r.test_kind, range.start(), range.end()));
    }
    if chrono::DateTime::parse_from_rfc3339(&r.timestamp).is_err() {
        err("timestamp_iso8601", format!("`{}` is not an RFC 3339 timestamp", r.timestamp));
    }
    if errs.is_empty() {
        Ok(())
    } else {
        Err(errs)
    }
}

/// Appends one rating, writing the header first when the file is new or
/// empty, and syncs before returning. Callers serialize concurrent writers.
pub fn append_rating(path: &Path, r: &RatingRecord) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut file = std::fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let empty = file.metadata().map_err(|e| Error::io(path, e))?.len() == 0;
    let mut buf = Vec::new();
    {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
        if empty {
            w.write_record(RATINGS_HEADER)?;
        }
        w.serialize(r)?;
        w.flush().map_err(|e| Error::io(path, e))?;
    }
    file.write_all(&buf).map_err(|e| Error::io(path, e))?;
    file.sync_data().map_err(|e| Error::io(path, e))
}

pub fn read_ratings(path: &Path) -> Result<Vec<RatingRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != RATINGS_HEADER {
        return Err(Error::Config(format!("{}: unexpected ratings header {header:?}", path.display())));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_ratings(path: &Path, ratings: &[RatingRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    if ratings.is_empty() {
        w.write_record(RATINGS_HEADER)?;
    }
    for r in ratings {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(n: usize, f: f32) -> Waveform {
        Waveform::new((0..n).map(|i| 0.3 * (i as f32 * f * 2.0 * std::f32::consts::PI / 16000.0).sin()).collect())
    }

    fn fixture(dir: &Path, n_utts: usize, systems: &[&str]) -> (Vec<SystemStimuli>, Vec<ReferenceAudio>) {
        let mut refs = Vec::new();
        for u in 0..n_utts {
            let id = format!("u{u:02}");
            let normal = dir.join(format!("ref/{id}_normal.wav"));
            let lombard = dir.join(format!("ref/{id}_lombard.wav"));
            write_wav(&normal, &tone(4000 + 100 * u, 200.0)).unwrap();
            write_wav(&lombard, &tone(4000 + 100 * u, 260.0)).unwrap();
            refs.push(ReferenceAudio { utterance_id: id, normal, lombard });
        }
        let sys = systems
            .iter()
            .map(|s| {
                let audio = (0..n_utts)
                    .map(|u| {
                        let p = dir.join(format!("{s}/u{u:02}.wav"));
                        write_wav(&p, &tone(3000 + 10 * u, 220.0)).unwrap();
                        (format!("u{u:02}"), p)
                    })
                    .collect();
                SystemStimuli { system: s.to_string(), audio }
            })
            .collect();
        (sys, refs)
    }

    #[test]
    fn stitched_length_is_both_parts_plus_gap() {
        let a = tone(1234, 100.0);
        let b = tone(777, 300.0);
        let s = stitch(&a, &b, 0.5).unwrap();
        assert_eq!(s.len(), 1234 + 8000 + 777);
        assert!(s.samples[1234..1234 + 8000].iter().all(|v| *v == 0.0));
        assert_eq!(&s.samples[1234 + 8000..], &b.samples[..]);
    }

    #[test]
    fn five_systems_sixteen_utterances_give_160_similarity_pairs() {
        let dir = tempfile::tempdir().unwrap();
        let (sys, refs) = fixture(dir.path(), 18, &["S1", "S2", "S3", "S4", "S5"]);
        let out = dir.path().join("test");
        let m = build_test_set(&sys, &refs, &TestSetConfig::default(), &out).unwrap();
        assert_eq!(m.count(TestKind::Similarity, ProbeKind::System), 160);
        assert_eq!(m.count(TestKind::Ccr, ProbeKind::System), 48);
        // 10% of 160 system pairs, half null pairs and half anchors
        assert_eq!(m.count(TestKind::Similarity, ProbeKind::NullPair), 8);
        assert_eq!(m.count(TestKind::Similarity, ProbeKind::CorruptedAnchor), 8);
        assert_eq!(m.count(TestKind::Ccr, ProbeKind::NullPair) + m.count(TestKind::Ccr, ProbeKind::CorruptedAnchor), 5);
        for p in &m.pairs {
            if p.probe_kind == ProbeKind::System {
                assert!(p.system.is_some());
                let synth = if p.swapped { &p.first_label } else { &p.second_label };
                assert_eq!(Some(synth), p.system.as_ref());
            }
            let a = read_wav(&out.join(&p.first_audio)).unwrap();
            let b = read_wav(&out.join(&p.second_audio)).unwrap();
            let s = read_wav(&m.stitched_path(p)).unwrap();
            assert_eq!(s.len(), a.len() + 8000 + b.len());
        }
        let back = TestManifest::load(&out.join("manifest.json")).unwrap();
        assert_eq!(back.pairs, m.pairs);
    }

    #[test]
    fn same_seed_same_randomization() {
        let dir = tempfile::tempdir().unwrap();
        let (sys, refs) = fixture(dir.path(), 6, &["S1", "S5"]);
        let cfg = TestSetConfig { utterances_per_system: 4, seed: 9, ..Default::default() };
        let a = build_test_set(&sys, &refs, &cfg, &dir.path().join("a")).unwrap();
        let b = build_test_set(&sys, &refs, &cfg, &dir.path().join("b")).unwrap();
        let strip = |m: &TestManifest| m.pairs.iter().map(|p| (p.id.clone(), p.first_label.clone(), p.second_label.clone(), p.utterance_id.clone(), p.swapped)).collect::<Vec<_>>();
        assert_eq!(strip(&a), strip(&b));
        let c = build_test_set(&sys, &refs, &TestSetConfig { seed: 10, ..cfg }, &dir.path().join("c")).unwrap();
        assert_ne!(strip(&a), strip(&c));
    }

    #[test]
    fn missing_audio_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let (mut sys, refs) = fixture(dir.path(), 3, &["S1"]);
        sys[0].audio.insert("u00".into(), dir.path().join("nope.wav"));
        let cfg = TestSetConfig { utterances_per_system: 3, ..Default::default() };
        assert!(matches!(build_test_set(&sys, &refs, &cfg, &dir.path().join("t")), Err(Error::MissingAudio(_))));
    }

    #[test]
    fn rating_validation_and_log() {
        let dir = tempfile::tempdir().unwrap();
        let (sys, refs) = fixture(dir.path(), 3, &["S1"]);
        let cfg = TestSetConfig { utterances_per_system: 2, ..Default::default() };
        let m = build_test_set(&sys, &refs, &cfg, &dir.path().join("t")).unwrap();
        let ccr = m.pairs.iter().find(|p| p.test_kind == TestKind::Ccr).unwrap();
        let good = RatingRecord {
            pair_id: ccr.id.clone(),
            listener_id: "L1".into(),
            test_kind: TestKind::Ccr,
            value: -2,
            timestamp: "2026-01-02T03:04:05Z".into(),
        };
        validate_rating(&m, &good).unwrap();
        let errs = validate_rating(&m, &RatingRecord { value: 5, ..good.clone() }).unwrap_err();
        assert_eq!(errs.iter().map(|e| e.field).collect::<Vec<_>>(), ["value"]);
        let errs = validate_rating(&m, &RatingRecord { test_kind: TestKind::Similarity, listener_id: "".into(), ..good.clone() })
            .unwrap_err();
        assert_eq!(errs.iter().map(|e| e.field).collect::<Vec<_>>(), ["test_kind", "listener_id", "value"]);

        let log = dir.path().join("r/ratings.csv");
        append_rating(&log, &good).unwrap();
        append_rating(&log, &RatingRecord { listener_id: "L2".into(), ..good.clone() }).unwrap();
        let text = std::fs::read_to_string(&log).unwrap();
        assert_eq!(text.lines().next().unwrap(), "pair_id,listener_id,test_kind,value,timestamp_iso8601");
        assert_eq!(text.lines().count(), 3);
        let back = read_ratings(&log).unwrap();
        assert_eq!(back[0], good);
        assert_eq!(back[1].listener_id, "L2");
    }

    #[test]
    fn category_codes() {
        for c in SimilarityCategory::ALL {
            assert_eq!(SimilarityCategory::from_code(c.code()), Some(c));
        }
        assert_eq!(SimilarityCategory::from_code(4), None);
        assert_eq!(SimilarityCategory::LEGEND_ORDER[0].label(), "Different: Absolutely sure");
    }
}
