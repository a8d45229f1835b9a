//! Run-artifact directory layout.
//!
//! ```text
//! run.json                     manifest: condition, config, thresholds, seed
//! trajectory.json              records + selected index
//! validation.json              validation metrics per evaluated prompt
//! baseline.json                optional lexicon metrics on validation
//! iteration_<t>/prompt.txt
//! iteration_<t>/metrics.json
//! iteration_<t>/critiques.jsonl
//! iteration_<t>/predictions.jsonl
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{DevelopmentRun, RunOptions, Thresholds, Trajectory, ValidationReport};
use crate::metrics::Metrics;

pub const RUN_FILE: &str = "run.json";
pub const TRAJECTORY_FILE: &str = "trajectory.json";
pub const VALIDATION_FILE: &str = "validation.json";
pub const BASELINE_FILE: &str = "baseline.json";

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("missing artifact {0}")]
    Missing(PathBuf),
    #[error("corrupt artifact {path}: {message}")]
    Corrupt { path: PathBuf, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("output directory {0} already contains a run")]
    Exists(PathBuf),
}

/// Everything needed to reproduce and label a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub condition: String,
    pub mode: String,
    pub seed: u64,
    pub thresholds: Thresholds,
    pub options: RunOptions,
    pub dev_prevalence: f64,
    pub val_prevalence: f64,
    /// The resolved configuration the run was started with.
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineArtifact {
    pub lexicon: String,
    pub val_metrics: Metrics,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArtifactError + '_ {
    move |source| ArtifactError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ArtifactError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifact serializes");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn write_jsonl<T: Serialize>(path: &Path, values: &[T]) -> Result<(), ArtifactError> {
    let mut text = String::new();
    for v in values {
        text.push_str(&serde_json::to_string(v).expect("artifact serializes"));
        text.push('\n');
    }
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, ArtifactError> {
    if !path.exists() {
        return Err(ArtifactError::Missing(path.to_path_buf()));
    }
    let raw = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&raw).map_err(|e| ArtifactError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Creates `dir`, refusing to reuse one that already holds a run.
pub fn prepare_dir(dir: &Path) -> Result<(), ArtifactError> {
    if dir.join(RUN_FILE).exists() || dir.join(TRAJECTORY_FILE).exists() {
        return Err(ArtifactError::Exists(dir.to_path_buf()));
    }
    fs::create_dir_all(dir).map_err(io_err(dir))
}

pub fn write_development(dir: &Path, manifest: &RunManifest, run: &DevelopmentRun) -> Result<(), ArtifactError> {
    prepare_dir(dir)?;
    write_json(&dir.join(RUN_FILE), manifest)?;
    for (record, artifacts) in run.trajectory.records.iter().zip(&run.iterations) {
        let it = dir.join(format!("iteration_{}", record.t));
        fs::create_dir_all(&it).map_err(io_err(&it))?;
        let prompt_path = it.join("prompt.txt");
        fs::write(&prompt_path, format!("{}\n", record.prompt.text)).map_err(io_err(&prompt_path))?;
        write_json(&it.join("metrics.json"), &record.dev_metrics)?;
        write_jsonl(&it.join("critiques.jsonl"), &artifacts.critiques)?;
        write_jsonl(&it.join("predictions.jsonl"), &artifacts.predictions)?;
    }
    write_json(&dir.join(TRAJECTORY_FILE), &run.trajectory)
}

pub fn load_manifest(dir: &Path) -> Result<RunManifest, ArtifactError> {
    read_json(&dir.join(RUN_FILE))
}

/// Loads and sanity-checks `trajectory.json`.
pub fn load_trajectory(dir: &Path) -> Result<Trajectory, ArtifactError> {
    let path = dir.join(TRAJECTORY_FILE);
    let trajectory: Trajectory = read_json(&path)?;
    let corrupt = |message: String| ArtifactError::Corrupt {
        path: path.clone(),
        message,
    };
    if trajectory.records.is_empty() {
        return Err(corrupt("no iteration records".into()));
    }
    if trajectory.records.len() > trajectory.t_max + 1 {
        return Err(corrupt("more records than t_max allows".into()));
    }
    if trajectory.records.iter().enumerate().any(|(i, r)| r.t != i) {
        return Err(corrupt("iteration indices are not 0..n".into()));
    }
    if trajectory.selected_index.is_some_and(|i| i >= trajectory.records.len()) {
        return Err(corrupt("selected_index out of bounds".into()));
    }
    Ok(trajectory)
}

pub fn load_validation(dir: &Path) -> Result<ValidationReport, ArtifactError> {
    read_json(&dir.join(VALIDATION_FILE))
}

pub fn load_baseline(dir: &Path) -> Result<Option<BaselineArtifact>, ArtifactError> {
    let path = dir.join(BASELINE_FILE);
    if !path.exists() {
        return Ok(None);
    }
    read_json(&path).map(Some)
}
