//! The development loop: evaluate, check convergence, pick the metric to
//! improve, critique the matching errors, synthesize the next prompt.
//! Degradation prevention, the guiding hook and retrospective selection sit
//! on top of that loop.

pub mod artifacts;
mod engine;

pub use engine::{dev_val_gap, DevelopmentRun, Evaluation, IterationArtifacts, Optimizer, ValidationEntry, ValidationReport};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{AgentError, Direction, GuidanceDirective, Prompt};
use crate::gateway::GatewayError;
use crate::metrics::{Metrics, MetricsError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid options: {0}")]
    InvalidOptions(String),
    #[error("trajectory has no selected prompt")]
    NoSelection,
}

impl PipelineError {
    pub fn is_transport(&self) -> bool {
        matches!(self, PipelineError::Agent(AgentError::Gateway(GatewayError::Transport { .. })))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub theta_sensitivity: f64,
    pub theta_specificity: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            theta_sensitivity: 0.9,
            theta_specificity: 0.9,
        }
    }
}

impl Thresholds {
    pub fn new(theta_sensitivity: f64, theta_specificity: f64) -> Result<Self, PipelineError> {
        let ok = |v: f64| v > 0.0 && v <= 1.0;
        if !ok(theta_sensitivity) || !ok(theta_specificity) {
            return Err(PipelineError::InvalidOptions("thresholds must lie in (0, 1]".into()));
        }
        Ok(Self {
            theta_sensitivity,
            theta_specificity,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converged,
    ImproveSensitivity,
    ImproveSpecificity,
}

impl Convergence {
    pub fn direction(self) -> Option<Direction> {
        match self {
            Convergence::Converged => None,
            Convergence::ImproveSensitivity => Some(Direction::Sensitivity),
            Convergence::ImproveSpecificity => Some(Direction::Specificity),
        }
    }
}

/// Undefined rates count as below threshold; sensitivity wins when both fail.
pub fn check_convergence(m: &Metrics, th: &Thresholds) -> Convergence {
    let sens_ok = m.sensitivity.is_some_and(|s| s >= th.theta_sensitivity);
    let spec_ok = m.specificity.is_some_and(|s| s >= th.theta_specificity);
    match (sens_ok, spec_ok) {
        (true, true) => Convergence::Converged,
        (false, _) => Convergence::ImproveSensitivity,
        (true, false) => Convergence::ImproveSpecificity,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMetric {
    Sensitivity,
    Specificity,
    None,
}

impl From<Option<Direction>> for TargetMetric {
    fn from(d: Option<Direction>) -> Self {
        match d {
            Some(Direction::Sensitivity) => TargetMetric::Sensitivity,
            Some(Direction::Specificity) => TargetMetric::Specificity,
            None => TargetMetric::None,
        }
    }
}

impl TargetMetric {
    pub fn direction(self) -> Option<Direction> {
        match self {
            TargetMetric::Sensitivity => Some(Direction::Sensitivity),
            TargetMetric::Specificity => Some(Direction::Specificity),
            TargetMetric::None => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionStrategy {
    FinalIteration,
    #[default]
    BestDevF1,
}

impl FromStr for SelectionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "final_iteration" => Ok(Self::FinalIteration),
            "best_dev_f1" => Ok(Self::BestDevF1),
            other => Err(format!("unknown selection strategy {other:?} (expected final_iteration or best_dev_f1)")),
        }
    }
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FinalIteration => "final_iteration",
            Self::BestDevF1 => "best_dev_f1",
        })
    }
}

/// What an F1 drop is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegradationBaseline {
    #[default]
    Previous,
    BestSoFar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIterations,
    /// Every critique for the targeted errors was non-actionable.
    CritiquesExhausted,
    /// The targeted metric had no errors left to critique.
    NoErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    pub t_max: usize,
    pub guiding_enabled: bool,
    pub selection_strategy: SelectionStrategy,
    pub degradation_prevention: bool,
    pub degradation_baseline: DegradationBaseline,
    /// Concurrent per-note model calls; 1 runs sequentially.
    pub parallelism: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            t_max: 7,
            guiding_enabled: false,
            selection_strategy: SelectionStrategy::BestDevF1,
            degradation_prevention: true,
            degradation_baseline: DegradationBaseline::Previous,
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub t: usize,
    pub prompt: Prompt,
    pub dev_metrics: Metrics,
    pub target_metric: TargetMetric,
    /// Critiques generated for the targeted errors.
    pub critique_count: usize,
    /// Of those, how many the non-actionable filter dropped.
    pub filtered_count: usize,
    /// This prompt came from a revert synthesis.
    pub reverted: bool,
    /// Directive issued at this iteration; it shapes the next prompt.
    pub guidance: Option<GuidanceDirective>,
    /// Specialist answers that fell back to the default label.
    pub defaulted_parses: usize,
    pub predictions_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub records: Vec<IterationRecord>,
    pub selected_index: Option<usize>,
    pub selection_strategy: SelectionStrategy,
    pub thresholds: Thresholds,
    pub t_max: usize,
    pub termination: Termination,
}

impl Trajectory {
    pub fn dev_f1(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.dev_metrics.f1).collect()
    }

    pub fn selected(&self) -> Option<&IterationRecord> {
        self.selected_index.and_then(|i| self.records.get(i))
    }
}

/// Argmax with the earliest index winning ties. F1 is never undefined here:
/// degenerate prompts carry F1 = 0 and cannot win.
pub fn argmax_earliest(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

pub fn select_index(dev_f1: &[f64], strategy: SelectionStrategy) -> Option<usize> {
    match strategy {
        SelectionStrategy::BestDevF1 => argmax_earliest(dev_f1),
        SelectionStrategy::FinalIteration => dev_f1.len().checked_sub(1),
    }
}

/// Applies the trajectory's own strategy. Panics on an empty trajectory.
pub fn select(trajectory: &Trajectory) -> usize {
    select_index(&trajectory.dev_f1(), trajectory.selection_strategy).expect("trajectory has at least one record")
}
