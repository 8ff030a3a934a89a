//! Batch front end: each subcommand reads project files, runs one stage of the
//! workflow and writes its outputs plus a provenance manifest (`run.json`)
//! into the output directory.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod manifest;

pub use commands::run;
pub use manifest::{FileHash, RunManifest, StageRecord};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("no winning model is recorded in {0}; run `baseline` into this directory first")]
    NoWinner(PathBuf),
    #[error("model file {path}: {message}")]
    ModelFile { path: PathBuf, message: String },
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Pipeline(#[from] mandv_core::pipeline::PipelineError),
    #[error(transparent)]
    Core(#[from] mandv_core::Error),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Debug, Parser)]
#[command(name = "mandv", version, about = "Baseline energy modelling and savings verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Read a meter CSV with its tag manifest and store the tagged dataset.
    Ingest(IngestArgs),
    /// Rank candidate variables and select baseline features.
    SelectFeatures(StageArgs),
    /// Availability statistics and outliers for the selected features.
    Assess(StageArgs),
    /// Select, clean, train every model family at every frequency and pick a winner.
    Baseline(BaselineArgs),
    /// Apply the winning model to reporting data and quantify savings.
    Report(ReportArgs),
    /// Acceptability verdicts for (savings, standard error) pairs.
    Acceptability(AcceptabilityArgs),
    /// Largest CV(RMSE) that still yields acceptable savings, per fractional savings.
    RequiredPerformance(RequiredArgs),
}

/// Where the input data comes from: a stored dataset or a CSV plus manifest.
#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Dataset written by `ingest`.
    #[arg(long, conflicts_with_all = ["csv", "manifest"])]
    pub dataset: Option<PathBuf>,
    /// Meter export (`timestamp,<column>...`).
    #[arg(long, requires = "manifest")]
    pub csv: Option<PathBuf>,
    /// Tag manifest for the CSV columns.
    #[arg(long, requires = "csv")]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Project configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; also holds the run manifest.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub csv: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Stem of the stored dataset file.
    #[arg(long, default_value = "dataset")]
    pub name: String,
}

#[derive(Debug, Clone, Args)]
pub struct StageArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BaselineArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Comma-separated modelling frequencies; defaults to the config's list.
    #[arg(long, value_delimiter = ',')]
    pub frequencies: Option<Vec<String>>,
    /// Comma-separated model families; defaults to all four.
    #[arg(long, value_delimiter = ',')]
    pub families: Option<Vec<String>>,
    /// Hyper-parameter grid override (TOML); unspecified keys keep their defaults.
    #[arg(long)]
    pub grid: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct ReportArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub data: DataArgs,
    /// Persisted model to apply instead of the winner.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Non-routine adjustments (TOML, one `[[adjustment]]` per record).
    #[arg(long)]
    pub adjustments: Option<PathBuf>,
    /// Confidence level for the savings range; defaults to the config's.
    #[arg(long)]
    pub confidence: Option<f64>,
    /// Also quantify every persisted model for the comparison tables.
    #[arg(long)]
    pub all_models: bool,
}

#[derive(Debug, Clone, Args)]
pub struct AcceptabilityArgs {
    /// CSV with columns `frequency,family,savings,se`.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct RequiredArgs {
    /// Comma-separated fractional savings; defaults to 0.01 to 0.30 in steps of 0.01.
    #[arg(long, value_delimiter = ',')]
    pub fractions: Option<Vec<f64>>,
    /// Test-set size, giving the t degrees of freedom (n − 1).
    #[arg(long)]
    pub n_test: usize,
    /// Number of reporting intervals.
    #[arg(long)]
    pub intervals: usize,
    #[arg(long, default_value_t = mandv_core::data::DEFAULT_CONFIDENCE)]
    pub confidence: f64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}
