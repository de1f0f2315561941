//! Subcommands. Settings are resolved in increasing precedence: built-in
//! defaults, the `--config` file, the common flags `--seed` and `--out`,
//! then subcommand flags.

mod distill;
mod eval;
mod gradcheck;
mod infer;
mod preprocess;
mod synth;
mod train;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use iidm_core::Error;

use crate::config::RunConfig;

pub use distill::DistillArgs;
pub use eval::EvalArgs;
pub use gradcheck::GradcheckArgs;
pub use infer::InferArgs;
pub use preprocess::PreprocessArgs;
pub use synth::SynthArgs;
pub use train::TrainArgs;

#[derive(Debug, Parser)]
#[command(name = "iidm", version, about = "Carbon-density estimation with distilled implicit diffusion models")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (overrides `paths.out`; default `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// More log output; repeat for debug detail.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Survey and canopy rasters to density rasters and tiles.
    Preprocess(PreprocessArgs),
    /// PCA-based distillation of the feature extractor, or UNet width selection.
    Distill(DistillArgs),
    /// Train the diffusion model on paired tiles.
    Train(TrainArgs),
    /// Estimate a density raster from imagery.
    Infer(InferArgs),
    /// Score predictions, or run the ablation grid.
    Eval(EvalArgs),
    /// Generate a synthetic paired dataset.
    Synth(SynthArgs),
    /// Finite-difference gradient suite.
    Gradcheck(GradcheckArgs),
}

/// Failures of a command, classified for the exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] Error),
    #[error("gradient check failed: {0}")]
    GradCheck(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    /// 1 for invalid input, 2 for numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_numeric() => 2,
            CliError::GradCheck(_) => 2,
            CliError::Core(_) => 1,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Resolved settings shared by every command.
#[derive(Clone, Debug)]
pub struct Context {
    pub config: RunConfig,
    pub out: PathBuf,
}

impl Context {
    pub fn resolve(cli: &Cli) -> CliResult<Self> {
        let mut config = match &cli.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = cli.seed {
            config.seed = s;
        }
        let out = cli.out.clone().or_else(|| config.paths.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
        config.paths.out = Some(out.clone());
        Ok(Self { config, out })
    }

    /// `name` inside the output directory, creating the directory.
    pub fn output(&self, name: &str) -> CliResult<PathBuf> {
        std::fs::create_dir_all(&self.out)?;
        Ok(self.out.join(name))
    }
}

/// A path from a flag, else from the configuration, else an error naming both.
pub(crate) fn required_path(flag: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> CliResult<PathBuf> {
    flag.clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| Error::InvalidArgument(format!("{what} is required")).into())
}

pub(crate) fn write_text(path: &Path, text: &str) -> CliResult<()> {
    std::fs::write(path, text)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn run(cli: &Cli) -> CliResult<()> {
    let ctx = Context::resolve(cli)?;
    match &cli.command {
        Command::Preprocess(a) => preprocess::run(&ctx, a),
        Command::Distill(a) => distill::run(&ctx, a),
        Command::Train(a) => train::run(&ctx, a),
        Command::Infer(a) => infer::run(&ctx, a),
        Command::Eval(a) => eval::run(&ctx, a),
        Command::Synth(a) => synth::run(&ctx, a),
        Command::Gradcheck(a) => gradcheck::run(&ctx, a),
    }
}
