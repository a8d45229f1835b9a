//! Deterministic simulation of the optimization loop.
//!
//! The model: a prompt is a 1-D decision boundary over latent note scores,
//! and each synthesis moves that boundary by an amount proportional to the
//! critique mass plus noise that shrinks with the size of the class being
//! corrected. It is the smallest mechanism that produces prevalence-dependent
//! oscillation; it makes no claim about how a language model behaves inside.

mod experiment;
mod world;

pub use experiment::{run_instability_experiment, run_trace, ExperimentParams, InstabilitySummary, PrevalenceSummary, SimTrace, TracePoint};
pub use world::{build_world, parse_boundary, stable_hash, unit_from_hash, NoteFacts, SimParams, SimWorld, BOUNDARY_TAG};

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::pipeline::PipelineError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}
