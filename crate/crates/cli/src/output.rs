//! CSV tables and the JSON summary with provenance.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, Format};
use crate::{CliError, Result};

/// One CSV payload, already encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct StudyResult {
    pub study: &'static str,
    pub results: Value,
    pub tables: Vec<Table>,
}

pub fn table<T: Serialize>(file: &str, rows: &[T]) -> Result<Table> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)
            .map_err(|e| CliError::Encode(format!("{file}: {e}")))?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Encode(format!("{file}: {e}")))?;
    Ok(Table {
        file: file.to_owned(),
        bytes,
    })
}

/// SHA-256 of the canonical (re-serialized) config, so formatting and key
/// order in the input file do not change it.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let canonical =
        serde_json::to_vec(&canonical_config(cfg)?).map_err(|e| CliError::Encode(e.to_string()))?;
    Ok(hex::encode(Sha256::digest(&canonical)))
}

fn canonical_config(cfg: &ExperimentConfig) -> Result<Value> {
    // Value maps are ordered by key.
    serde_json::to_value(cfg).map_err(|e| CliError::Encode(e.to_string()))
}

pub fn summary(cfg: &ExperimentConfig, result: &StudyResult) -> Result<Value> {
    Ok(json!({
        "study": result.study,
        "version": env!("CARGO_PKG_VERSION"),
        "config_sha256": config_hash(cfg)?,
        "master_seed": cfg.rng.master_seed,
        "bit_exact": cfg.rng.bit_exact,
        "config": canonical_config(cfg)?,
        "files": result.tables.iter().map(|t| t.file.as_str()).collect::<Vec<_>>(),
        "results": result.results,
    }))
}

fn write(path: PathBuf, bytes: &[u8]) -> Result<PathBuf> {
    std::fs::write(&path, bytes).map_err(|source| CliError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

/// Writes the requested formats into `dir` and returns the files written.
pub fn write_result(
    cfg: &ExperimentConfig,
    result: &StudyResult,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut written = Vec::new();
    if cfg.output.formats.contains(&Format::Csv) {
        for t in &result.tables {
            written.push(write(dir.join(&t.file), &t.bytes)?);
        }
    }
    // The summary carries the provenance, so it is always written.
    let mut text = serde_json::to_vec_pretty(&summary(cfg, result)?)
        .map_err(|e| CliError::Encode(e.to_string()))?;
    text.push(b'\n');
    written.push(write(dir.join("summary.json"), &text)?);
    Ok(written)
}
