//! The `lsalab` command line:
//! `lsalab <experiment> --config PATH [--seed N] [--workers N] [--out BASE] [--format F]`.
//!
//! Flags override the matching configuration fields. Exit codes: 0 every row
//! passed, 1 I/O error, 2 invalid configuration or usage, 3 at least one row
//! failed.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Parser;
use thiserror::Error;

use crate::config::{ConfigError, Experiment, ExperimentConfig};
use crate::output::{self, EmitError, Format, RunMeta};

#[derive(Debug, Parser)]
#[command(name = "lsalab", version, about = "Run a linear stochastic approximation experiment")]
pub struct Cli {
    pub experiment: Experiment,
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output path without extension; defaults to results/<experiment>.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "both")]
    pub format: Format,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] clap::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Emit(#[from] EmitError),
    #[error("output {0} would overwrite the configuration")]
    WouldOverwriteConfig(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Usage(_) | Self::Config(ConfigError::Parse { .. } | ConfigError::Invalid(_)) => 2,
            Self::Config(ConfigError::Io { .. }) | Self::Emit(_) | Self::WouldOverwriteConfig(_) => 1,
        }
    }
}

/// What a completed run produced.
#[derive(Debug)]
pub struct Outcome {
    pub experiment: String,
    pub rows: usize,
    pub failed: usize,
    pub written: Vec<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> u8 {
        if self.failed == 0 {
            0
        } else {
            3
        }
    }
}

/// Parses `args` (program name first) and runs the experiment.
pub fn execute<I, T>(args: I) -> Result<Outcome, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let started = Instant::now();
    let mut config = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if cli.workers.is_some() {
        config.workers = cli.workers;
    }
    if cli.out.is_some() {
        config.out = cli.out.clone();
    }
    let workers = config
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let set = crate::run_with_workers(&config, cli.experiment, workers)?;
    let meta = RunMeta {
        version: env!("CARGO_PKG_VERSION").to_owned(),
        config_hash: config.hash(),
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let base = config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results").join(cli.experiment.name()));
    guard_config(&cli.config, &base, cli.format)?;
    let written = output::emit(&set, &meta, &base, cli.format)?;
    Ok(Outcome {
        experiment: set.experiment.clone(),
        rows: set.rows.len(),
        failed: set.rows.iter().filter(|r| !r.pass).count(),
        written,
    })
}

fn guard_config(config: &Path, base: &Path, format: Format) -> Result<(), CliError> {
    let exts: &[&str] = match format {
        Format::Csv => &["csv"],
        Format::Json => &["json"],
        Format::Both => &["csv", "json"],
    };
    let config = std::fs::canonicalize(config).unwrap_or_else(|_| config.to_owned());
    for ext in exts {
        let target = base.with_extension(ext);
        if std::fs::canonicalize(&target).is_ok_and(|t| t == config) {
            return Err(CliError::WouldOverwriteConfig(target));
        }
    }
    Ok(())
}
