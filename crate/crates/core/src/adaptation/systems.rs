use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::{checkpoint_inventory, conditioning_track};
use crate::error::{Error, Result};
use crate::features::{OutputKind, Waveform, WorldFeatures};
use crate::lstm::{AcousticModel, DurationModel, LstmRegressor};
use crate::nn::{Checkpoint, ModelKind};
use crate::seq2seq::{alignment_monotonicity, Seq2Seq};
use crate::text::{upsample_linguistic, Frontend, PhonemeSequence};
use crate::vocoders::world_lite_synthesize;
use crate::wavenet::{Sampling, WaveNet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SystemId {
    S1,
    S2,
    S3,
    S4,
    S5,
}

impl SystemId {
    pub const ALL: [SystemId; 5] = [SystemId::S1, SystemId::S2, SystemId::S3, SystemId::S4, SystemId::S5];
}

impl std::fmt::Display for SystemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

impl std::str::FromStr for SystemId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemId::ALL
            .into_iter()
            .find(|id| id.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown system `{s}` (expected S1..S5)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TtsModel {
    Lstm,
    Seq2seq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocoderKind {
    WorldLite,
    Wavenet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemSpec {
    pub id: SystemId,
    pub tts_model: TtsModel,
    pub output_kind: OutputKind,
    pub vocoder: VocoderKind,
}

impl SystemSpec {
    /// The five evaluated systems.
    pub fn for_id(id: SystemId) -> Self {
        use OutputKind::*;
        use TtsModel::*;
        use VocoderKind::*;
        let (tts_model, output_kind, vocoder) = match id {
            SystemId::S1 => (Lstm, World, WorldLite),
            SystemId::S2 => (Seq2seq, World, WorldLite),
            SystemId::S3 => (Lstm, World, Wavenet),
            SystemId::S4 => (Seq2seq, World, Wavenet),
            SystemId::S5 => (Seq2seq, Mel, Wavenet),
        };
        SystemSpec { id, tts_model, output_kind, vocoder }
    }

    pub fn validate(&self) -> Result<()> {
        if self.tts_model == TtsModel::Lstm && self.output_kind == OutputKind::Mel {
            return Err(Error::Config(format!("{}: the lstm baseline predicts World features only", self.id)));
        }
        if self.vocoder == VocoderKind::WorldLite && self.output_kind == OutputKind::Mel {
            return Err(Error::Config(format!("{}: the source-filter vocoder needs World features", self.id)));
        }
        if *self != SystemSpec::for_id(self.id) {
            return Err(Error::Config(format!("{} does not match its system definition", self.id)));
        }
        Ok(())
    }

    fn acoustic_tag(&self) -> &'static str {
        match (self.tts_model, self.output_kind) {
            (TtsModel::Lstm, _) => "lstm_acoustic",
            (TtsModel::Seq2seq, OutputKind::World) => "seq2seq_world",
            (TtsModel::Seq2seq, OutputKind::Mel) => "seq2seq_mel",
        }
    }

    fn vocoder_tag(&self) -> Option<&'static str> {
        match (self.vocoder, self.output_kind) {
            (VocoderKind::WorldLite, _) => None,
            (VocoderKind::Wavenet, OutputKind::World) => Some("wavenet_world"),
            (VocoderKind::Wavenet, OutputKind::Mel) => Some("wavenet_mel"),
        }
    }
}

/// Checkpoint files a system is assembled from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SystemCheckpoints {
    pub acoustic: Option<PathBuf>,
    pub duration: Option<PathBuf>,
    pub vocoder: Option<PathBuf>,
}

impl SystemCheckpoints {
    /// Standard file names from the final stage directories of the acoustic
    /// and vocoder runs; components whose file is absent stay `None`.
    pub fn from_stage_dirs(spec: &SystemSpec, acoustic_dir: &Path, vocoder_dir: &Path) -> Self {
        let existing = |p: PathBuf| p.exists().then_some(p);
        let in_dir = |dir: &Path, tag: &str| existing(dir.join(format!("{tag}.ckpt")));
        SystemCheckpoints {
            acoustic: in_dir(acoustic_dir, spec.acoustic_tag()),
            duration: (spec.tts_model == TtsModel::Lstm).then(|| in_dir(acoustic_dir, "lstm_duration")).flatten(),
            vocoder: spec.vocoder_tag().and_then(|t| in_dir(vocoder_dir, t)),
        }
    }

    /// Paths inside a stage-run directory, as written by `run_stage`.
    pub fn from_runs(spec: &SystemSpec, acoustic_run: &Path, acoustic_stage: &str, vocoder_run: &Path, vocoder_stage: &str) -> Self {
        Self::from_stage_dirs(spec, &acoustic_run.join(acoustic_stage), &vocoder_run.join(vocoder_stage))
    }
}

#[derive(Debug, Clone)]
enum Acoustic {
    Seq2seq(Seq2Seq<f32>),
    Lstm { duration: DurationModel<f32>, acoustic: AcousticModel<f32> },
}

#[derive(Debug, Clone)]
enum Vocoder {
    WorldLite,
    Wavenet(WaveNet<f32>),
}

/// A composed text → phonemes → acoustic frames → waveform pipeline.
#[derive(Debug, Clone)]
pub struct TtsSystem {
    pub spec: SystemSpec,
    frontend: Frontend,
    acoustic: Acoustic,
    vocoder: Vocoder,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub wave: Waveform,
    pub phonemes: Vec<String>,
    /// De-normalized acoustic frames fed to the vocoder.
    pub frames: Array2<f32>,
    /// Decoder steps × phonemes, for sequence-to-sequence systems.
    pub alignment: Option<Array2<f32>>,
    pub monotonicity: Option<f64>,
    pub hit_max_decoder_steps: bool,
}

fn load_component(spec: &SystemSpec, path: &Option<PathBuf>, component: &str) -> Result<Checkpoint> {
    let missing = || Error::MissingComponent { system: spec.id.to_string(), component: component.to_string() };
    match path {
        Some(p) if p.exists() => Checkpoint::load(p),
        _ => Err(missing()),
    }
}

fn check_inventory(ckpt: &Checkpoint, frontend: &Frontend, what: &str) -> Result<()> {
    match checkpoint_inventory(ckpt)? {
        Some(inv) if inv != frontend.inventory => {
            Err(Error::Config(format!("{what} was trained with a different phoneme inventory")))
        }
        _ => Ok(()),
    }
}

pub fn build_system(spec: &SystemSpec, checkpoints: &SystemCheckpoints, frontend: Frontend) -> Result<TtsSystem> {
    spec.validate()?;
    let acoustic = match spec.tts_model {
        TtsModel::Seq2seq => {
            let c = load_component(spec, &checkpoints.acoustic, &format!("acoustic model ({})", spec.acoustic_tag()))?;
            check_inventory(&c, &frontend, "acoustic model")?;
            let m = Seq2Seq::from_checkpoint(&c)?;
            if m.config.output_kind != spec.output_kind {
                return Err(Error::Config(format!("{}: acoustic checkpoint predicts {}", spec.id, m.config.output_kind)));
            }
            Acoustic::Seq2seq(m)
        }
        TtsModel::Lstm => {
            let a = load_component(spec, &checkpoints.acoustic, "acoustic model (lstm_acoustic)")?;
            let d = load_component(spec, &checkpoints.duration, "duration model (lstm_duration)")?;
            check_inventory(&a, &frontend, "acoustic model")?;
            check_inventory(&d, &frontend, "duration model")?;
            Acoustic::Lstm {
                duration: DurationModel {
                    net: LstmRegressor::from_checkpoint(&d, ModelKind::Duration)?,
                    n_symbols: frontend.inventory.len(),
                },
                acoustic: AcousticModel { net: LstmRegressor::from_checkpoint(&a, ModelKind::Lstm)? },
            }
        }
    };
    let vocoder = match spec.vocoder {
        VocoderKind::WorldLite => Vocoder::WorldLite,
        VocoderKind::Wavenet => {
            let tag = spec.vocoder_tag().expect("wavenet systems have a vocoder tag");
            let c = load_component(spec, &checkpoints.vocoder, &format!("wavenet vocoder ({tag})"))?;
            let w = WaveNet::from_checkpoint(&c)?;
            if w.cond_stats.is_none() {
                return Err(Error::Checkpoint("wavenet checkpoint lacks conditioning stats".into()));
            }
            Vocoder::Wavenet(w)
        }
    };
    Ok(TtsSystem { spec: *spec, frontend, acoustic, vocoder })
}

/// Acoustic prediction for one transcript.
#[derive(Debug, Clone)]
pub struct AcousticPrediction {
    pub seq: PhonemeSequence,
    pub frames: Array2<f32>,
    pub alignment: Option<Array2<f32>>,
    pub hit_max_decoder_steps: bool,
}

impl TtsSystem {
    pub fn frontend(&self) -> &Frontend {
        &self.frontend
    }

    pub fn predict_features(&self, text: &str) -> Result<AcousticPrediction> {
        let seq = self.frontend.phonemize(text)?;
        Ok(match &self.acoustic {
            Acoustic::Seq2seq(m) => {
                let s = m.synthesize(&seq.ids)?;
                AcousticPrediction { seq, frames: s.frames, alignment: Some(s.alignment), hit_max_decoder_steps: s.hit_max_decoder_steps }
            }
            Acoustic::Lstm { duration, acoustic } => {
                let d = duration.predict(&seq)?;
                let ling = upsample_linguistic(&seq, &d, self.frontend.inventory.len())?;
                let frames = acoustic.predict_acoustic(&ling)?;
                AcousticPrediction { seq, frames, alignment: None, hit_max_decoder_steps: false }
            }
        })
    }

    /// Deterministic in `seed` for fixed checkpoints.
    pub fn synthesize(&self, text: &str, seed: u64) -> Result<SynthOutput> {
        let pred = self.predict_features(text)?;
        if pred.frames.nrows() == 0 {
            return Err(Error::Empty("acoustic model produced no frames"));
        }
        let kind = self.spec.output_kind;
        let mut wave = match &self.vocoder {
            Vocoder::WorldLite => world_lite_synthesize(&WorldFeatures::from_matrix(&pred.frames)?, seed)?,
            Vocoder::Wavenet(w) => {
                let stats = w.cond_stats.as_ref().expect("checked at build time");
                let n = pred.frames.nrows() * kind.hop();
                let track = conditioning_track(kind, &pred.frames, stats, n)?;
                w.generate(track.view(), seed, Sampling::Temperature(1.0))?
            }
        };
        wave.limit_peak();
        let monotonicity = pred.alignment.as_ref().map(|a| alignment_monotonicity(a.view()));
        Ok(SynthOutput {
            wave,
            phonemes: pred.seq.symbols,
            frames: pred.frames,
            alignment: pred.alignment,
            monotonicity,
            hit_max_decoder_steps: pred.hit_max_decoder_steps,
        })
    }
}
