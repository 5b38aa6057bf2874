//! Config-driven experiment harness on top of `stackinfer-core`.
//!
//! A run reads one JSON config, dispatches on `study.name`, and writes CSV
//! tables plus a `summary.json` that echoes the config with its hash and seed.

pub mod config;
pub mod output;
pub mod studies;

use std::path::{Path, PathBuf};

pub use config::ExperimentConfig;
pub use output::StudyResult;
pub use studies::run_study;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "STACKINFER_OUT";
pub const DEFAULT_OUT_DIR: &str = "results";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] stackinfer_core::Error),
    #[error("I/O error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("encoding error: {0}")]
    Encode(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(_) => 2,
            CliError::Io { .. } | CliError::Encode(_) => 4,
        }
    }
}

/// `--out`, then the config's `output.directory`, then `$STACKINFER_OUT`,
/// then `./results`.
pub fn resolve_out_dir(
    flag: Option<PathBuf>,
    cfg: &ExperimentConfig,
    env: Option<PathBuf>,
) -> PathBuf {
    flag.or_else(|| cfg.output.directory.clone())
        .or(env)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
}

/// Runs the study on a pool of `threads` workers (the global pool if `None`).
pub fn run_with_threads(cfg: &ExperimentConfig, threads: Option<usize>) -> Result<StudyResult> {
    match threads {
        None => run_study(cfg),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Config(format!("cannot build a pool of {n} threads: {e}")))?
            .install(|| run_study(cfg)),
    }
}

/// Validate, run, and write the outputs into `out`.
pub fn execute(cfg: &ExperimentConfig, out: &Path, threads: Option<usize>) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let result = run_with_threads(cfg, threads)?;
    output::write_result(cfg, &result, out)
}
