//! Corpus, training and synthesis commands.

use std::path::{Path, PathBuf};

use clap::Args;
use lombard_core::adaptation::{
    build_system, run_stage, ModelChoice, StageContext, StagePlan, SystemCheckpoints, SystemId, SystemSpec,
};
use lombard_core::corpus::toy::{generate_toy_corpus, ToyCorpusSpec};
use lombard_core::corpus::{load_manifest, partition_corpus, Split, Style};
use lombard_core::features::OutputKind;
use lombard_core::prepare::{prepare_features, FeatureSet};
use lombard_core::text::{Frontend, Lexicon};
use lombard_core::wav::write_wav;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{CliError, CliResult};

/// clap parser for any enum with snake_case serde names.
pub fn serde_arg<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| format!("invalid value `{s}`"))
}

pub(crate) fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing required option --{flag} (flag or config)")))
}

fn create_dir(p: &Path) -> CliResult<()> {
    std::fs::create_dir_all(p).map_err(|e| lombard_core::Error::io(p, e).into())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenToyArgs {
    /// Output directory; the manifest is written to `<out>/manifest.jsonl`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_parser = serde_arg::<Style>)]
    pub style: Option<Style>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub speaker: Option<String>,
    #[arg(long)]
    pub f0_hz: Option<f64>,
    #[arg(long)]
    pub formant_scale: Option<f64>,
    /// Records held out for validation and test (the rest train).
    #[arg(long)]
    pub valid: Option<usize>,
    #[arg(long)]
    pub test: Option<usize>,
}

pub fn gen_toy(a: GenToyArgs) -> CliResult<()> {
    let out = required(a.out, "out")?;
    let d = ToyCorpusSpec::default();
    let seed = a.seed.unwrap_or(0);
    let spec = ToyCorpusSpec {
        n_utterances: a.n.unwrap_or(d.n_utterances),
        style: a.style.unwrap_or(d.style),
        f0_base_hz: a.f0_hz.unwrap_or(d.f0_base_hz),
        seed,
        speaker: a.speaker.unwrap_or(d.speaker),
        formant_scale: a.formant_scale.unwrap_or(d.formant_scale),
        ..d
    };
    let all = generate_toy_corpus(&spec, &out)?;
    let (va, te) = (a.valid.unwrap_or(0), a.test.unwrap_or(0));
    let n = all.len();
    if va + te >= n {
        return Err(CliError::Usage(format!("--valid {va} and --test {te} leave no training records out of {n}")));
    }
    let m = partition_corpus(&all.records, (n - va - te, va, te), seed, out.clone())?;
    let path = out.join("manifest.jsonl");
    m.save(&path)?;
    println!("wrote {} records to {}", m.len(), path.display());
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct PrepareArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = serde_arg::<FeatureSet>)]
    pub features: Option<FeatureSet>,
}

pub fn prepare(a: PrepareArgs) -> CliResult<()> {
    let manifest = load_manifest(&required(a.manifest, "manifest")?)?;
    let out = required(a.out, "out")?;
    let report = prepare_features(&manifest, &out, a.features.unwrap_or(FeatureSet::Both))?;
    println!("extracted {} feature files, skipped {} up to date", report.extracted.len(), report.skipped.len());
    if report.failures.is_empty() {
        return Ok(());
    }
    for (id, reason) in &report.failures {
        eprintln!("{id}: {reason}");
    }
    let ids: Vec<&str> = report.failures.iter().map(|(id, _)| id.as_str()).collect();
    Err(CliError::Usage(format!("{} record(s) failed: {}", ids.len(), ids.join(", "))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelArg {
    Seq2seq,
    Lstm,
    Wavenet,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[arg(long)]
    pub plan: Option<PathBuf>,
    #[arg(long, value_parser = serde_arg::<ModelArg>)]
    pub model: Option<ModelArg>,
    /// Acoustic representation for seq2seq and WaveNet (the lstm baseline is World-only).
    #[arg(long, value_parser = serde_arg::<OutputKind>)]
    pub features: Option<OutputKind>,
    /// Overrides the plan seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run directory; each stage writes `<out>/<stage>/`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory written by `prepare`, used as a feature cache.
    #[arg(long)]
    pub features_dir: Option<PathBuf>,
    /// Run only this stage.
    #[arg(long)]
    pub stage: Option<String>,
    /// Lexicon TSV (defaults to the bundled toy lexicon).
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

pub(crate) fn frontend(lexicon: Option<&Path>) -> CliResult<Frontend> {
    let mut f = Frontend::toy();
    if let Some(p) = lexicon {
        f.lexicon = Lexicon::load(p)?;
    }
    Ok(f)
}

pub fn model_choice(model: ModelArg, features: Option<OutputKind>) -> CliResult<ModelChoice> {
    let kind = features.unwrap_or(OutputKind::World);
    Ok(match model {
        ModelArg::Seq2seq => ModelChoice::Seq2seq(kind),
        ModelArg::Wavenet => ModelChoice::Wavenet(kind),
        ModelArg::Lstm if kind == OutputKind::World => ModelChoice::Lstm,
        ModelArg::Lstm => return Err(CliError::Usage("the lstm baseline only predicts world features".into())),
    })
}

/// `adapt` skips the scratch stage, which must already have been trained.
pub fn train(a: TrainArgs, adapt_only: bool) -> CliResult<()> {
    let mut plan = StagePlan::load(&required(a.plan, "plan")?)?;
    if let Some(seed) = a.seed {
        plan.seed = seed;
    }
    let model = model_choice(required(a.model, "model")?, a.features)?;
    let ctx = StageContext {
        out_dir: required(a.out, "out")?,
        features_dir: a.features_dir,
        frontend: frontend(a.lexicon.as_deref())?,
    };
    let indices: Vec<usize> = match &a.stage {
        Some(name) => {
            vec![plan.index_of(name).ok_or_else(|| CliError::Usage(format!("plan has no stage `{name}`")))?]
        }
        None => (usize::from(adapt_only)..plan.stages.len()).collect(),
    };
    if adapt_only && indices.contains(&0) {
        return Err(CliError::Usage("adapt runs fine-tuning stages only; use train for the scratch stage".into()));
    }
    for i in indices {
        let outcome = run_stage(&plan, i, model, &ctx)?;
        for art in &outcome.artifacts {
            let first = art.curve.first().map(|r| r.total);
            let last = art.curve.last().map(|r| r.total);
            if last.is_some_and(|l| !l.is_finite()) {
                return Err(lombard_core::Error::NonFiniteLoss { batch_ids: vec![outcome.stage.clone()] }.into());
            }
            println!(
                "{}: {} steps, loss {} -> {}, checkpoint {}",
                outcome.stage,
                art.curve.len(),
                first.map_or("-".into(), |v| format!("{v:.4}")),
                last.map_or("-".into(), |v| format!("{v:.4}")),
                art.checkpoint.display()
            );
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthArgs {
    /// S1..S5.
    #[arg(long)]
    pub system: Option<String>,
    #[arg(long)]
    pub text: Option<String>,
    /// Output WAV, or a directory when synthesizing a manifest split.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Stage directory holding the acoustic checkpoints.
    #[arg(long)]
    pub acoustic_dir: Option<PathBuf>,
    /// Stage directory holding the WaveNet checkpoint (defaults to the acoustic directory).
    #[arg(long)]
    pub vocoder_dir: Option<PathBuf>,
    /// Synthesize the transcripts of a corpus split instead of `--text`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, value_parser = serde_arg::<Split>)]
    pub split: Option<Split>,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
}

/// Attention matrix saved next to a synthesized file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AlignmentFile {
    pub title: String,
    pub phonemes: Vec<String>,
    /// Decoder steps × phonemes.
    pub alignment: Vec<Vec<f32>>,
}

pub fn synth(a: SynthArgs) -> CliResult<()> {
    let id: SystemId = required(a.system, "system")?.parse()?;
    let spec = SystemSpec::for_id(id);
    let acoustic_dir = required(a.acoustic_dir, "acoustic-dir")?;
    let vocoder_dir = a.vocoder_dir.unwrap_or_else(|| acoustic_dir.clone());
    let out = required(a.out, "out")?;
    let seed = a.seed.unwrap_or(0);
    let ckpts = SystemCheckpoints::from_stage_dirs(&spec, &acoustic_dir, &vocoder_dir);
    let system = build_system(&spec, &ckpts, frontend(a.lexicon.as_deref())?)?;

    let batch = a.manifest.is_some();
    let jobs: Vec<(String, String, PathBuf)> = match (a.text, a.manifest) {
        (Some(text), None) => vec![(id.to_string(), text, out.clone())],
        (None, Some(m)) => {
            let m = load_manifest(&m)?;
            create_dir(&out)?;
            m.split(a.split.unwrap_or(Split::Test))
                .into_iter()
                .map(|r| (r.id.clone(), r.text.clone(), out.join(format!("{}.wav", r.id))))
                .collect()
        }
        _ => return Err(CliError::Usage("give exactly one of --text and --manifest".into())),
    };
    for (name, text, path) in &jobs {
        let x = system.synthesize(text, seed)?;
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            create_dir(parent)?;
        }
        write_wav(path, &x.wave)?;
        let mut line = format!("{id} {name}: {:.2} s -> {}", x.wave.duration_s(), path.display());
        if let Some(m) = x.monotonicity {
            line.push_str(&format!(", alignment monotonicity {m:.3}"));
        }
        if x.hit_max_decoder_steps {
            line.push_str(" (hit the decoder step limit)");
        }
        println!("{line}");
        if let (true, Some(al)) = (batch, &x.alignment) {
            let f = AlignmentFile {
                title: format!("{id} {name}"),
                phonemes: x.phonemes.clone(),
                alignment: al.rows().into_iter().map(|r| r.to_vec()).collect(),
            };
            let p = path.with_extension("align.json");
            std::fs::write(&p, serde_json::to_vec(&f).expect("plain data")).map_err(|e| lombard_core::Error::io(&p, e))?;
        }
    }
    Ok(())
}
