//! `eval` subcommands: stimulus construction, the rating server, aggregation
//! and the report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand};
use lombard_core::corpus::{load_manifest, Split};
use lombard_core::evaluation::stats::Correction;
use lombard_core::evaluation::{
    aggregate_ccr, aggregate_similarity, build_test_set, ccr_observations, included_ratings, read_ratings,
    render_report, screen_listeners, similarity_cells, similarity_observations, AlignmentPlot, CcrAggregate,
    CcrConfig, ListenerScreenResult, ReferenceAudio, ReportInput, ScreeningConfig, SimilarityAggregate,
    SystemStimuli, TestKind, TestManifest, TestSetConfig,
};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::commands::{required, serde_arg, AlignmentFile};
use crate::config::ConfigFile;
use crate::{CliError, CliResult};

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Build stitched stimuli and the test manifest.
    BuildTest(BuildTestArgs),
    /// Serve the manifest, audio and rating endpoints.
    Serve(ServeArgs),
    /// Screen listeners and aggregate the ratings into JSON tables.
    Aggregate(AggregateArgs),
    /// Aggregate and render the HTML report.
    Report(ReportArgs),
}

pub fn run(cmd: EvalCommand, cfg: &ConfigFile) -> CliResult<()> {
    match cmd {
        EvalCommand::BuildTest(a) => build_test(cfg.merge("eval.build-test", a)?),
        EvalCommand::Serve(a) => crate::serve::run(cfg.merge("eval.serve", a)?),
        EvalCommand::Aggregate(a) => aggregate(cfg.merge("eval.aggregate", a)?),
        EvalCommand::Report(a) => report(cfg.merge("eval.report", a)?),
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct BuildTestArgs {
    /// Directory with one subdirectory of `<utterance id>.wav` files per system.
    #[arg(long)]
    pub stimuli: Option<PathBuf>,
    /// Corpus whose split provides the Lombard references and the utterance ids.
    #[arg(long)]
    pub lombard_manifest: Option<PathBuf>,
    /// Corpus searched (by transcript) for the normal-style references.
    #[arg(long)]
    pub normal_manifest: Option<PathBuf>,
    #[arg(long, value_parser = serde_arg::<Split>)]
    pub split: Option<Split>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub utterances: Option<usize>,
    #[arg(long)]
    pub probe_rate: Option<f64>,
    #[arg(long)]
    pub gap_s: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated systems that also enter the CCR test.
    #[arg(long)]
    pub ccr_systems: Option<String>,
}

fn wav_files(dir: &Path) -> CliResult<BTreeMap<String, PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| lombard_core::Error::io(dir, e))?;
    let mut out = BTreeMap::new();
    for entry in rd.flatten() {
        let p = entry.path();
        if p.extension().is_some_and(|e| e == "wav") {
            if let Some(stem) = p.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_string(), p);
            }
        }
    }
    Ok(out)
}

pub fn build_test(a: BuildTestArgs) -> CliResult<()> {
    let stimuli = required(a.stimuli, "stimuli")?;
    let lombard = load_manifest(&required(a.lombard_manifest, "lombard-manifest")?)?;
    let normal = load_manifest(&required(a.normal_manifest, "normal-manifest")?)?;
    let out = required(a.out, "out")?;

    let mut references = Vec::new();
    for r in lombard.split(a.split.unwrap_or(Split::Test)) {
        let Some(n) = normal.records.iter().find(|n| n.text == r.text) else {
            tracing::warn!(utterance = %r.id, "no normal-style recording with the same transcript; skipped");
            continue;
        };
        references.push(ReferenceAudio {
            utterance_id: r.id.clone(),
            normal: normal.audio_path(n),
            lombard: lombard.audio_path(r),
        });
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&stimuli)
        .map_err(|e| lombard_core::Error::io(&stimuli, e))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    let systems = dirs
        .iter()
        .map(|d| {
            Ok(SystemStimuli {
                system: d.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string(),
                audio: wav_files(d)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let d = TestSetConfig::default();
    let cfg = TestSetConfig {
        utterances_per_system: a.utterances.unwrap_or(d.utterances_per_system),
        probe_rate: a.probe_rate.unwrap_or(d.probe_rate),
        gap_s: a.gap_s.unwrap_or(d.gap_s),
        seed: a.seed.unwrap_or(d.seed),
        ccr_systems: a
            .ccr_systems
            .map(|s| s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect())
            .unwrap_or(d.ccr_systems),
        ..d
    };
    let m = build_test_set(&systems, &references, &cfg, &out)?;
    println!(
        "{} pairs ({} similarity, {} ccr) written to {}",
        m.pairs.len(),
        m.pairs.iter().filter(|p| p.test_kind == TestKind::Similarity).count(),
        m.pairs.iter().filter(|p| p.test_kind == TestKind::Ccr).count(),
        out.join("manifest.json").display()
    );
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ServeArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Ratings CSV (default: `ratings.csv` next to the manifest).
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    /// Listen address; port 0 picks a free port.
    #[arg(long)]
    pub addr: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct AggregateArgs {
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub ratings: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub null_pass_rate: Option<f64>,
    #[arg(long)]
    pub anchor_pass_rate: Option<f64>,
    #[arg(long)]
    pub confidence: Option<f64>,
    /// `bonferroni` (default) or `none`.
    #[arg(long, value_parser = serde_arg::<Correction>)]
    pub correction: Option<Correction>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Aggregates {
    pub screening: Vec<ListenerScreenResult>,
    pub similarity: Vec<SimilarityAggregate>,
    pub ccr: Option<CcrAggregate>,
}

pub(crate) fn ratings_path(manifest: &Path, ratings: Option<PathBuf>) -> PathBuf {
    ratings.unwrap_or_else(|| manifest.parent().unwrap_or(Path::new(".")).join("ratings.csv"))
}

fn compute(a: &AggregateArgs) -> CliResult<Aggregates> {
    let manifest_path = required(a.manifest.clone(), "manifest")?;
    let manifest = TestManifest::load(&manifest_path)?;
    let ratings = read_ratings(&ratings_path(&manifest_path, a.ratings.clone()))?;
    let d = ScreeningConfig::default();
    let screen_cfg = ScreeningConfig {
        null_pass_rate: a.null_pass_rate.unwrap_or(d.null_pass_rate),
        anchor_pass_rate: a.anchor_pass_rate.unwrap_or(d.anchor_pass_rate),
    };
    let screening = screen_listeners(&manifest, &ratings, &screen_cfg);
    let kept = included_ratings(&ratings, &screening);
    let cells = similarity_cells(&manifest);
    let similarity = if cells.is_empty() {
        Vec::new()
    } else {
        aggregate_similarity(&similarity_observations(&manifest, &kept), &cells)?
    };
    let ccr_obs = ccr_observations(&manifest, &kept);
    let ccr = if ccr_obs.is_empty() {
        None
    } else {
        let d = CcrConfig::default();
        let cfg = CcrConfig { confidence: a.confidence.unwrap_or(d.confidence), correction: a.correction.unwrap_or(d.correction) };
        Some(aggregate_ccr(&ccr_obs, &cfg)?)
    };
    Ok(Aggregates { screening, similarity, ccr })
}

fn print_summary(agg: &Aggregates) {
    let excluded: Vec<&str> = agg.screening.iter().filter(|s| !s.included).map(|s| s.listener_id.as_str()).collect();
    println!("listeners: {} ({} excluded: {})", agg.screening.len(), excluded.len(), excluded.join(", "));
    for s in &agg.similarity {
        let p = s.percentages;
        println!(
            "similarity {} vs {}: n={} same_sure {:.1}% same_unsure {:.1}% diff_unsure {:.1}% diff_sure {:.1}%",
            s.system, s.reference, s.n, p[0], p[1], p[2], p[3]
        );
    }
    if let Some(c) = &agg.ccr {
        for s in &c.scores {
            println!("ccr {}: mean {:+.3} [{:+.3}, {:+.3}] n={}", s.label, s.mean, s.ci_low, s.ci_high, s.n);
        }
    }
}

fn write_json(path: &Path, v: &impl Serialize) -> CliResult<()> {
    let bytes = serde_json::to_vec_pretty(v).map_err(lombard_core::Error::from)?;
    std::fs::write(path, bytes).map_err(|e| lombard_core::Error::io(path, e).into())
}

pub fn aggregate(a: AggregateArgs) -> CliResult<()> {
    let out = required(a.out.clone(), "out")?;
    let agg = compute(&a)?;
    std::fs::create_dir_all(&out).map_err(|e| lombard_core::Error::io(&out, e))?;
    write_json(&out.join("aggregates.json"), &agg)?;
    print_summary(&agg);
    println!("wrote {}", out.join("aggregates.json").display());
    Ok(())
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReportArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub aggregate: AggregateArgs,
    /// Directory searched recursively for `*.align.json` files written by `synth`.
    #[arg(long)]
    pub alignments: Option<PathBuf>,
    /// At most this many alignment plots.
    #[arg(long)]
    pub max_alignments: Option<usize>,
    #[arg(long)]
    pub title: Option<String>,
}

fn find_alignments(dir: &Path, out: &mut Vec<PathBuf>) -> CliResult<()> {
    let rd = std::fs::read_dir(dir).map_err(|e| lombard_core::Error::io(dir, e))?;
    let mut entries: Vec<PathBuf> = rd.flatten().map(|e| e.path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            find_alignments(&p, out)?;
        } else if p.to_string_lossy().ends_with(".align.json") {
            out.push(p);
        }
    }
    Ok(())
}

fn load_alignment(path: &Path) -> CliResult<AlignmentPlot> {
    let bytes = std::fs::read(path).map_err(|e| lombard_core::Error::io(path, e))?;
    let f: AlignmentFile = serde_json::from_slice(&bytes).map_err(lombard_core::Error::from)?;
    let cols = f.phonemes.len();
    if f.alignment.iter().any(|r| r.len() != cols) {
        return Err(CliError::Usage(format!("{}: alignment rows do not match the phoneme count", path.display())));
    }
    let flat: Vec<f32> = f.alignment.concat();
    let alignment = Array2::from_shape_vec((f.alignment.len(), cols), flat).expect("checked row lengths");
    Ok(AlignmentPlot { title: f.title, phonemes: f.phonemes, alignment })
}

pub fn report(a: ReportArgs) -> CliResult<()> {
    let out = required(a.aggregate.out.clone(), "out")?;
    let agg = compute(&a.aggregate)?;
    let mut files = Vec::new();
    if let Some(dir) = &a.alignments {
        find_alignments(dir, &mut files)?;
    }
    files.truncate(a.max_alignments.unwrap_or(6));
    let alignments = files.iter().map(|p| load_alignment(p)).collect::<CliResult<Vec<_>>>()?;
    let input = ReportInput {
        title: a.title.unwrap_or_else(|| "Listening test results".into()),
        similarity: &agg.similarity,
        ccr: agg.ccr.as_ref(),
        screening: &agg.screening,
        alignments: &alignments,
    };
    let files = render_report(&input, &out)?;
    write_json(&out.join("aggregates.json"), &agg)?;
    print_summary(&agg);
    println!("report written to {}", files.html.display());
    Ok(())
}
