//! Staged training: a scratch stage on a donor corpus followed by fine-tuning
//! stages that start from the previous stage's checkpoint, plus the composed
//! text-to-waveform systems built from the resulting checkpoints.

mod systems;
mod transfer;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::corpus::{load_manifest, Split};
use crate::error::{Error, Result};
use crate::features::{
    select_wavenet_conditioning, MuLawCodec, NormKind, NormalizationStats, OutputKind, Waveform, WorldFeatures,
    MGC_DIM,
};
use crate::lstm::{forced_align, DurationModel, LstmConfig, LstmRegressor, SequenceExample};
use crate::nn::{fit, Checkpoint, FitOptions, LossReport, ModelKind};
use crate::prepare::load_or_extract;
use crate::seq2seq::{Seq2Seq, Seq2SeqConfig, Seq2SeqExample};
use crate::text::{upsample_linguistic, Frontend, PhonemeSequence, POSITIONAL_FEATURES};
use crate::wavenet::{make_excerpts, upsample_conditioning, WaveNet, WaveNetConfig};

pub use systems::{build_system, AcousticPrediction, SynthOutput, SystemCheckpoints, SystemId, SystemSpec, TtsModel, TtsSystem, VocoderKind};
pub use transfer::{checkpoint_inventory, transfer_checkpoint};

/// Fine-tuning stages default to this fraction of the scratch learning rate.
pub const FINE_TUNE_LR_FACTOR: f64 = 0.1;
pub const WAVENET_EXCERPTS_PER_UTTERANCE: usize = 4;
/// Forced-alignment refinement rounds for the duration targets.
pub const ALIGN_ITERATIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageInit {
    Scratch,
    FromCheckpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSize {
    #[default]
    Toy,
    Standard,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub name: String,
    /// Corpus manifest, relative to the plan file.
    pub corpus: PathBuf,
    pub init: StageInit,
    /// Name of the stage whose checkpoint initializes this one.
    #[serde(default)]
    pub checkpoint: Option<String>,
    pub steps: usize,
    #[serde(default)]
    pub learning_rate: Option<f64>,
    #[serde(default)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StagePlan {
    pub stages: Vec<StageSpec>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub size: ModelSize,
    /// Directory the manifests are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl StagePlan {
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut plan: StagePlan = serde_json::from_slice(&bytes)?;
        plan.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        plan.validate()?;
        Ok(plan)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    /// The first stage trains from scratch and every later stage fine-tunes
    /// the checkpoint of the stage right before it.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let Some(first) = self.stages.first() else {
            return bad("stage plan has no stages".into());
        };
        if first.init != StageInit::Scratch {
            return bad(format!("first stage `{}` must train from scratch", first.name));
        }
        let mut names = std::collections::HashSet::new();
        for (i, st) in self.stages.iter().enumerate() {
            if st.name.is_empty() || st.name.contains(['/', '\\']) {
                return bad(format!("invalid stage name `{}`", st.name));
            }
            if !names.insert(st.name.as_str()) {
                return bad(format!("duplicate stage name `{}`", st.name));
            }
            if st.learning_rate.is_some_and(|lr| !(lr > 0.0 && lr.is_finite())) {
                return bad(format!("stage `{}` has a non-positive learning rate", st.name));
            }
            if st.batch_size == Some(0) {
                return bad(format!("stage `{}` has batch size 0", st.name));
            }
            if i > 0 {
                if st.init != StageInit::FromCheckpoint {
                    return bad(format!("stage `{}` must start from a checkpoint", st.name));
                }
                let prev = &self.stages[i - 1].name;
                if st.checkpoint.as_deref().is_some_and(|c| c != prev) {
                    return bad(format!("stage `{}` must start from stage `{prev}`", st.name));
                }
            } else if st.checkpoint.is_some() {
                return bad(format!("scratch stage `{}` cannot name a checkpoint", st.name));
            }
        }
        Ok(())
    }

    pub fn corpus_path(&self, stage: &StageSpec) -> PathBuf {
        if stage.corpus.is_absolute() {
            stage.corpus.clone()
        } else {
            self.base_dir.join(&stage.corpus)
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.stages.iter().position(|s| s.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelChoice {
    Seq2seq(OutputKind),
    /// Acoustic model plus duration model, always on World-style features.
    Lstm,
    Wavenet(OutputKind),
}

impl ModelChoice {
    pub fn feature_kinds(self) -> Vec<OutputKind> {
        match self {
            ModelChoice::Seq2seq(k) | ModelChoice::Wavenet(k) => vec![k],
            ModelChoice::Lstm => vec![OutputKind::World],
        }
    }

    /// File stems of the checkpoints a stage writes.
    pub fn artifact_tags(self) -> Vec<&'static str> {
        match self {
            ModelChoice::Seq2seq(OutputKind::World) => vec!["seq2seq_world"],
            ModelChoice::Seq2seq(OutputKind::Mel) => vec!["seq2seq_mel"],
            ModelChoice::Lstm => vec!["lstm_duration", "lstm_acoustic"],
            ModelChoice::Wavenet(OutputKind::World) => vec!["wavenet_world"],
            ModelChoice::Wavenet(OutputKind::Mel) => vec!["wavenet_mel"],
        }
    }
}

impl std::fmt::Display for ModelChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelChoice::Seq2seq(k) => write!(f, "seq2seq-{k}"),
            ModelChoice::Lstm => f.write_str("lstm"),
            ModelChoice::Wavenet(k) => write!(f, "wavenet-{k}"),
        }
    }
}

pub fn checkpoint_path(out_dir: &Path, stage: &str, tag: &str) -> PathBuf {
    out_dir.join(stage).join(format!("{tag}.ckpt"))
}

pub fn curve_path(out_dir: &Path, stage: &str, tag: &str) -> PathBuf {
    out_dir.join(stage).join(format!("{tag}.loss.csv"))
}

/// One training utterance with its phonemes, audio and requested features.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub id: String,
    pub text: String,
    pub seq: PhonemeSequence,
    pub wave: Waveform,
    pub features: BTreeMap<OutputKind, Array2<f32>>,
}

/// Loads the records of `split` from a manifest, phonemizing the text and
/// taking features from `features_dir` when they are up to date there.
pub fn load_utterances(
    manifest_path: &Path,
    frontend: &Frontend,
    kinds: &[OutputKind],
    split: Split,
    features_dir: Option<&Path>,
) -> Result<Vec<Utterance>> {
    let manifest = load_manifest(manifest_path)?;
    manifest
        .split(split)
        .into_iter()
        .map(|r| {
            let mut features = BTreeMap::new();
            for &k in kinds {
                features.insert(k, load_or_extract(&manifest, r, k, features_dir)?);
            }
            Ok(Utterance {
                id: r.id.clone(),
                text: r.text.clone(),
                seq: frontend.phonemize(&r.text)?,
                wave: manifest.load_audio(r)?,
                features,
            })
        })
        .collect()
}

/// Conditioning frames for the vocoder: World features drop aperiodicity and
/// reorder to `[mgc | vuv | log_f0]`; mel frames pass through.
pub fn vocoder_frames(kind: OutputKind, frames: &Array2<f32>) -> Result<Array2<f32>> {
    Ok(match kind {
        OutputKind::World => select_wavenet_conditioning(&WorldFeatures::from_matrix(frames)?),
        OutputKind::Mel => frames.clone(),
    })
}

fn binary_columns(kind: OutputKind) -> &'static [usize] {
    match kind {
        OutputKind::World => &[MGC_DIM],
        OutputKind::Mel => &[],
    }
}

/// Per-sample conditioning in [0, 1] for `n_samples` of audio.
pub fn conditioning_track(
    kind: OutputKind,
    frames: &Array2<f32>,
    stats: &NormalizationStats,
    n_samples: usize,
) -> Result<Array2<f32>> {
    let cond = stats.apply(vocoder_frames(kind, frames)?.view())?.mapv(|v| v.clamp(0.0, 1.0));
    upsample_conditioning(cond.view(), kind.frame_shift_ms(), n_samples, binary_columns(kind))
}

#[derive(Debug, Clone)]
pub struct StageArtifact {
    pub tag: &'static str,
    pub checkpoint: PathBuf,
    pub curve_path: PathBuf,
    pub curve: Vec<LossReport>,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: String,
    pub artifacts: Vec<StageArtifact>,
}

/// Where stage outputs go and where prepared features can be found.
#[derive(Debug, Clone)]
pub struct StageContext {
    pub out_dir: PathBuf,
    pub features_dir: Option<PathBuf>,
    pub frontend: Frontend,
}

fn stage_seed(plan_seed: u64, index: usize, tag: &str) -> u64 {
    let t = tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
    plan_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ t ^ (index as u64).wrapping_mul(0xD1B5_4A32_D192_ED03)
}

fn write_curve(path: &Path, curve: &[LossReport]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path)?;
    let parts: Vec<&str> = curve.first().map(|r| r.parts.iter().map(|p| p.0).collect()).unwrap_or_default();
    let mut header = vec!["step", "total"];
    header.extend(&parts);
    w.write_record(&header)?;
    for (i, r) in curve.iter().enumerate() {
        let mut row = vec![i.to_string(), r.total.to_string()];
        row.extend(r.parts.iter().map(|p| p.1.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

struct StageRun<'a> {
    plan: &'a StagePlan,
    index: usize,
    ctx: &'a StageContext,
    utterances: Vec<Utterance>,
}

impl StageRun<'_> {
    fn stage(&self) -> &StageSpec {
        &self.plan.stages[self.index]
    }

    fn init_checkpoint(&self, tag: &str) -> Result<Option<Checkpoint>> {
        if self.stage().init == StageInit::Scratch {
            return Ok(None);
        }
        let prev = &self.plan.stages[self.index - 1].name;
        let path = checkpoint_path(&self.ctx.out_dir, prev, tag);
        if !path.exists() {
            return Err(Error::StageOrder { stage: self.stage().name.clone(), missing: path });
        }
        let ckpt = Checkpoint::load(&path)?;
        // adapt the symbol tables when the frontend changed between stages
        match checkpoint_inventory(&ckpt)? {
            Some(inv) if inv != self.ctx.frontend.inventory => {
                Ok(Some(transfer_checkpoint(&ckpt, &self.ctx.frontend.inventory, stage_seed(self.plan.seed, self.index, tag))?))
            }
            _ => Ok(Some(ckpt)),
        }
    }

    fn learning_rate(&self, default: f64) -> f64 {
        let scratch = self.plan.stages[0].learning_rate.unwrap_or(default);
        self.stage().learning_rate.unwrap_or(match self.stage().init {
            StageInit::Scratch => scratch,
            StageInit::FromCheckpoint => scratch * FINE_TUNE_LR_FACTOR,
        })
    }

    fn fit_options(&self, tag: &str, batch: usize, lr: f64) -> FitOptions {
        FitOptions {
            steps: self.stage().steps,
            batch_size: self.stage().batch_size.unwrap_or(batch),
            learning_rate: lr,
            seed: stage_seed(self.plan.seed, self.index, tag),
            decay_half_life: None,
        }
    }

    fn metadata(&self, tag: &str, lr: f64, curve: &[LossReport]) -> serde_json::Value {
        let stage = self.stage();
        let init = match stage.init {
            StageInit::Scratch => "scratch".to_string(),
            StageInit::FromCheckpoint => format!("stage:{}", self.plan.stages[self.index - 1].name),
        };
        let final_losses: BTreeMap<&str, f64> = curve
            .last()
            .map(|r| std::iter::once(("total", r.total)).chain(r.parts.iter().copied()).collect())
            .unwrap_or_default();
        json!({
            "stage": stage.name,
            "stage_index": self.index,
            "model": tag,
            "corpus": self.plan.corpus_path(stage),
            "init": init,
            "steps": stage.steps,
            "learning_rate": lr,
            "utterances": self.utterances.len(),
            "final_losses": final_losses,
            "inventory": self.ctx.frontend.inventory.symbols(),
        })
    }

    fn finish(&self, tag: &'static str, ckpt: Checkpoint, curve: Vec<LossReport>) -> Result<StageArtifact> {
        let path = checkpoint_path(&self.ctx.out_dir, &self.stage().name, tag);
        ckpt.save(&path)?;
        let cpath = curve_path(&self.ctx.out_dir, &self.stage().name, tag);
        write_curve(&cpath, &curve)?;
        tracing::info!(stage = %self.stage().name, tag, steps = curve.len(), final_loss = curve.last().map(|r| r.total), "stage finished");
        Ok(StageArtifact { tag, checkpoint: path, curve_path: cpath, curve })
    }

    fn frames(&self, kind: OutputKind) -> Vec<&Array2<f32>> {
        self.utterances.iter().map(|u| &u.features[&kind]).collect()
    }

    fn seq2seq(&self, kind: OutputKind) -> Result<StageArtifact> {
        let tag = ModelChoice::Seq2seq(kind).artifact_tags()[0];
        let n_symbols = self.ctx.frontend.inventory.len();
        let mut model = match self.init_checkpoint(tag)? {
            Some(c) => Seq2Seq::<f32>::from_checkpoint(&c)?,
            None => {
                let config = match self.plan.size {
                    ModelSize::Toy => Seq2SeqConfig::toy(kind, n_symbols),
                    ModelSize::Standard => Seq2SeqConfig::standard(kind, n_symbols),
                };
                let mut m = Seq2Seq::new(config, stage_seed(self.plan.seed, self.index, tag))?;
                let views: Vec<_> = self.frames(kind).into_iter().map(|f| f.view()).collect();
                m.stats = Some(NormalizationStats::fit_pooled(NormKind::MeanVar, &views)?);
                m
            }
        };
        let stats = model.stats.clone().ok_or_else(|| Error::Checkpoint("seq2seq checkpoint lacks stats".into()))?;
        let examples = self
            .utterances
            .iter()
            .map(|u| {
                Ok(Seq2SeqExample { id: u.id.clone(), ids: u.seq.ids.clone(), frames: stats.apply(u.features[&kind].view())? })
            })
            .collect::<Result<Vec<_>>>()?;
        let lr = self.learning_rate(model.config.learning_rate);
        let opts = self.fit_options(tag, model.config.batch_size, lr);
        let curve = fit(&mut model, &examples, &opts)?;
        let ckpt = model.to_checkpoint(self.metadata(tag, lr, &curve))?;
        self.finish(tag, ckpt, curve)
    }

    fn lstm(&self) -> Result<Vec<StageArtifact>> {
        let n_symbols = self.ctx.frontend.inventory.len();
        let width = n_symbols + POSITIONAL_FEATURES;
        let config = |out| match self.plan.size {
            ModelSize::Toy => LstmConfig::toy(width, out),
            ModelSize::Standard => LstmConfig::standard(width, out),
        };
        let dur_init = self.init_checkpoint("lstm_duration")?;
        let ac_init = self.init_checkpoint("lstm_acoustic")?;
        let mut acoustic = match ac_init {
            Some(c) => LstmRegressor::<f32>::from_checkpoint(&c, ModelKind::Lstm)?,
            None => {
                let mut net = LstmRegressor::new(config(crate::features::WORLD_DIM), stage_seed(self.plan.seed, self.index, "lstm_acoustic"))?;
                let views: Vec<_> = self.frames(OutputKind::World).into_iter().map(|f| f.view()).collect();
                net.stats = Some(NormalizationStats::fit_pooled(NormKind::MeanVar, &views)?);
                net
            }
        };
        let mut duration = match dur_init {
            Some(c) => DurationModel { net: LstmRegressor::<f32>::from_checkpoint(&c, ModelKind::Duration)?, n_symbols },
            None => DurationModel::new(config(1), n_symbols, stage_seed(self.plan.seed, self.index, "lstm_duration"))?,
        };
        let stats = acoustic.stats.clone().ok_or_else(|| Error::Checkpoint("acoustic checkpoint lacks stats".into()))?;
        let normalized = self
            .utterances
            .iter()
            .map(|u| stats.apply(u.features[&OutputKind::World].view()))
            .collect::<Result<Vec<_>>>()?;
        let pairs: Vec<_> = self.utterances.iter().zip(&normalized).map(|(u, x)| (&u.seq, x.view())).collect();
        let durations = forced_align(&pairs, n_symbols, ALIGN_ITERATIONS);

        let mut dur_examples = Vec::new();
        let mut ac_examples = Vec::new();
        for ((u, x), d) in self.utterances.iter().zip(&normalized).zip(&durations) {
            let Some(d) = d else {
                tracing::warn!(id = %u.id, "utterance shorter than its phoneme sequence; skipped");
                continue;
            };
            if let Some(ex) = duration.example(&u.id, &u.seq, d) {
                dur_examples.push(ex);
            }
            let ling = upsample_linguistic(&u.seq, d, n_symbols)?;
            ac_examples.push(SequenceExample { id: u.id.clone(), inputs: ling.frames, targets: x.clone() });
        }

        let lr_d = self.learning_rate(duration.net.config.learning_rate);
        let opts = self.fit_options("lstm_duration", duration.net.config.batch_size, lr_d);
        let dcurve = fit(&mut duration.net, &dur_examples, &opts)?;
        let dckpt = duration.net.to_checkpoint(ModelKind::Duration, self.metadata("lstm_duration", lr_d, &dcurve))?;
        let lr_a = self.learning_rate(acoustic.config.learning_rate);
        let opts = self.fit_options("lstm_acoustic", acoustic.config.batch_size, lr_a);
        let acurve = fit(&mut acoustic, &ac_examples, &opts)?;
        let ackpt = acoustic.to_checkpoint(ModelKind::Lstm, self.metadata("lstm_acoustic", lr_a, &acurve))?;
        Ok(vec![self.finish("lstm_duration", dckpt, dcurve)?, self.finish("lstm_acoustic", ackpt, acurve)?])
    }

    fn wavenet(&self, kind: OutputKind) -> Result<StageArtifact> {
        let tag = ModelChoice::Wavenet(kind).artifact_tags()[0];
        let cond_dim = match kind {
            OutputKind::World => crate::features::WORLD_COND_DIM,
            OutputKind::Mel => crate::features::MEL_DIM,
        };
        let mut model = match self.init_checkpoint(tag)? {
            Some(c) => WaveNet::<f32>::from_checkpoint(&c)?,
            None => {
                let config = match self.plan.size {
                    ModelSize::Toy => WaveNetConfig::toy(cond_dim),
                    ModelSize::Standard => WaveNetConfig::standard(cond_dim),
                };
                let mut m = WaveNet::new(config, stage_seed(self.plan.seed, self.index, tag))?;
                let frames = self.frames(kind).into_iter().map(|f| vocoder_frames(kind, f)).collect::<Result<Vec<_>>>()?;
                let views: Vec<_> = frames.iter().map(|f| f.view()).collect();
                m.cond_stats = Some(NormalizationStats::fit_pooled(NormKind::MinMax, &views)?);
                m
            }
        };
        let stats = model.cond_stats.clone().ok_or_else(|| Error::Checkpoint("wavenet checkpoint lacks cond stats".into()))?;
        let codec = MuLawCodec::default();
        let mut rng = ChaCha8Rng::seed_from_u64(stage_seed(self.plan.seed, self.index, "excerpts"));
        let mut examples = Vec::new();
        for u in &self.utterances {
            let codes: Vec<usize> = codec.encode(&u.wave.samples).into_iter().map(usize::from).collect();
            let track = conditioning_track(kind, &u.features[&kind], &stats, codes.len())?;
            examples.extend(make_excerpts(&u.id, &codes, track.view(), model.config.excerpt_len, WAVENET_EXCERPTS_PER_UTTERANCE, &mut rng));
        }
        let lr = self.learning_rate(model.config.learning_rate);
        let opts = self.fit_options(tag, model.config.batch_size, lr);
        let curve = fit(&mut model, &examples, &opts)?;
        let ckpt = model.to_checkpoint(self.metadata(tag, lr, &curve))?;
        self.finish(tag, ckpt, curve)
    }
}

/// Trains (scratch) or fine-tunes (all parameters) one stage of `plan` and
/// writes its checkpoints and loss curves under `ctx.out_dir/<stage>/`.
pub fn run_stage(plan: &StagePlan, index: usize, model: ModelChoice, ctx: &StageContext) -> Result<StageOutcome> {
    plan.validate()?;
    let stage = plan
        .stages
        .get(index)
        .ok_or_else(|| Error::Config(format!("plan has no stage {index}")))?;
    // fail on ordering before spending time on feature loading
    if stage.init == StageInit::FromCheckpoint {
        let prev = &plan.stages[index - 1].name;
        for tag in model.artifact_tags() {
            let p = checkpoint_path(&ctx.out_dir, prev, tag);
            if !p.exists() {
                return Err(Error::StageOrder { stage: stage.name.clone(), missing: p });
            }
        }
    }
    let utterances = load_utterances(
        &plan.corpus_path(stage),
        &ctx.frontend,
        &model.feature_kinds(),
        Split::Train,
        ctx.features_dir.as_deref(),
    )?;
    if utterances.is_empty() {
        return Err(Error::Empty("stage corpus has no training utterances"));
    }
    tracing::info!(stage = %stage.name, %model, utterances = utterances.len(), steps = stage.steps, "running stage");
    let run = StageRun { plan, index, ctx, utterances };
    let artifacts = match model {
        ModelChoice::Seq2seq(kind) => vec![run.seq2seq(kind)?],
        ModelChoice::Lstm => run.lstm()?,
        ModelChoice::Wavenet(kind) => vec![run.wavenet(kind)?],
    };
    Ok(StageOutcome { stage: stage.name.clone(), artifacts })
}

/// Runs every stage in order.
pub fn run_plan(plan: &StagePlan, model: ModelChoice, ctx: &StageContext) -> Result<Vec<StageOutcome>> {
    (0..plan.stages.len()).map(|i| run_stage(plan, i, model, ctx)).collect()
}
