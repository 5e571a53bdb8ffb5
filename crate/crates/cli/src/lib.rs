//! Command-line front end: corpus preparation, staged training, synthesis,
//! and the listening-test workflow including the rating server.

pub mod commands;
pub mod config;
pub mod eval;
pub mod serve;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lombard_core::Error as CoreError;

#[derive(Debug, Parser)]
#[command(name = "lombard", version, about = "Speaking-style adaptation for sequence-to-sequence TTS")]
pub struct Cli {
    /// JSON document with one object per command (`{"train": {"plan": ...}}`);
    /// flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic toy corpus with a manifest.
    GenToy(commands::GenToyArgs),
    /// Extract acoustic features and normalization statistics.
    Prepare(commands::PrepareArgs),
    /// Run every stage of a stage plan (or one named stage).
    Train(commands::TrainArgs),
    /// Run the fine-tuning stages of a plan, starting from the existing donor checkpoint.
    Adapt(commands::TrainArgs),
    /// Synthesize speech with one of the systems S1..S5.
    Synth(commands::SynthArgs),
    /// Listening-test workflow.
    #[command(subcommand)]
    Eval(eval::EvalCommand),
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// 2 for bad input or configuration, 3 for failures while running.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Core(e) => match e {
                CoreError::NonFiniteLoss { .. } | CoreError::Shape(_) => 3,
                CoreError::Io { source, .. } if source.kind() != std::io::ErrorKind::NotFound => 3,
                _ => 2,
            },
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn init_logging(verbose: u8) {
    let default = match verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| default.into());
    let _ = tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).try_init();
}

pub fn run(cli: Cli) -> CliResult<()> {
    let cfg = config::ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenToy(a) => commands::gen_toy(cfg.merge("gen-toy", a)?),
        Command::Prepare(a) => commands::prepare(cfg.merge("prepare", a)?),
        Command::Train(a) => commands::train(cfg.merge("train", a)?, false),
        Command::Adapt(a) => commands::train(cfg.merge("adapt", a)?, true),
        Command::Synth(a) => commands::synth(cfg.merge("synth", a)?),
        Command::Eval(e) => eval::run(e, &cfg),
    }
}

pub fn main_with_args(args: impl IntoIterator<Item = std::ffi::OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
