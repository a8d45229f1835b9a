use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_world, SimError, SimParams};
use crate::agents::{Prompt, Sop, Templates};
use crate::gateway::SimBackend;
use crate::metrics::Metrics;
use crate::pipeline::{Optimizer, RunOptions, SelectionStrategy, Thresholds};
use crate::reporting::oscillation_report;

/// One (prevalence, seed) run configuration, minus the prevalence and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentParams {
    /// Notes across both splits.
    pub n: usize,
    pub sim: SimParams,
    pub t_max: usize,
    pub thresholds: Thresholds,
    pub degradation_prevention: bool,
    pub guiding_enabled: bool,
    pub selection_strategy: SelectionStrategy,
    /// Seeds run are `base_seed .. base_seed + seeds`.
    pub base_seed: u64,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        Self {
            n: 400,
            sim: SimParams::default(),
            t_max: 7,
            thresholds: Thresholds::default(),
            degradation_prevention: false,
            guiding_enabled: false,
            selection_strategy: SelectionStrategy::BestDevF1,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub t: usize,
    pub boundary: f64,
    pub dev: Metrics,
    pub val: Metrics,
}

/// Per-iteration boundary and metrics of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub prevalence: f64,
    pub seed: u64,
    pub points: Vec<TracePoint>,
    pub selected_index: usize,
    /// max - min of validation sensitivity across iterations.
    pub oscillation_amplitude: f64,
    /// Iterations with zero validation sensitivity while positives exist.
    pub collapse_iterations: Vec<usize>,
}

impl SimTrace {
    pub fn final_val_f1(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.val.f1)
    }

    pub fn selected_val_f1(&self) -> f64 {
        self.points[self.selected_index].val.f1
    }

    /// Plottable CSV: one row per iteration.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "iteration",
            "boundary",
            "dev_sensitivity",
            "dev_specificity",
            "dev_f1",
            "val_sensitivity",
            "val_specificity",
            "val_f1",
        ])
        .expect("in-memory write");
        let rate = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
        for p in &self.points {
            w.write_record([
                p.t.to_string(),
                format!("{:.6}", p.boundary),
                rate(p.dev.sensitivity),
                rate(p.dev.specificity),
                format!("{:.6}", p.dev.f1),
                rate(p.val.sensitivity),
                rate(p.val.specificity),
                format!("{:.6}", p.val.f1),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Runs the full development loop plus validation of every iteration on a
/// fresh simulated world.
pub fn run_trace(prevalence: f64, seed: u64, params: &ExperimentParams) -> Result<SimTrace, SimError> {
    let world = Arc::new(build_world(params.n, prevalence, seed, params.sim.clone())?);
    let backend = SimBackend::new(Arc::clone(&world));
    let templates = Templates::builtin();
    let options = RunOptions {
        t_max: params.t_max,
        guiding_enabled: params.guiding_enabled,
        selection_strategy: params.selection_strategy,
        degradation_prevention: params.degradation_prevention,
        parallelism: 1,
        ..RunOptions::default()
    };
    let optimizer = Optimizer::new(&backend, &templates, options)?;
    let sop = Sop::default();
    let p0 = Prompt::initial(params.sim.term.clone());
    let run = optimizer.run_development(&p0, &sop, world.dev(), &params.thresholds)?;
    let validation = optimizer.run_validation(&run.trajectory, &sop, world.val(), true)?;

    let points: Vec<TracePoint> = run
        .trajectory
        .records
        .iter()
        .zip(&validation.entries)
        .map(|(r, v)| TracePoint {
            t: r.t,
            boundary: world.boundary_of(&r.prompt.text),
            dev: r.dev_metrics,
            val: v.val_metrics,
        })
        .collect();
    let val: Vec<Metrics> = points.iter().map(|p| p.val).collect();
    let osc = oscillation_report(&val, world.val().positives() as f64 / world.val().len() as f64);
    Ok(SimTrace {
        prevalence,
        seed,
        points,
        selected_index: validation.selected_index,
        oscillation_amplitude: osc.amplitude,
        collapse_iterations: osc.collapse_iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrevalenceSummary {
    pub prevalence: f64,
    pub seeds: usize,
    pub mean_amplitude: f64,
    /// Fraction of seeds with at least one collapse iteration.
    pub collapse_frequency: f64,
    pub mean_collapse_iterations: f64,
    pub mean_final_val_f1: f64,
    pub mean_selected_val_f1: f64,
    /// Seeds where selection landed on a collapse iteration.
    pub selected_collapses: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstabilitySummary {
    pub params: ExperimentParams,
    pub rows: Vec<PrevalenceSummary>,
}

impl InstabilitySummary {
    pub fn row(&self, prevalence: f64) -> Option<&PrevalenceSummary> {
        self.rows.iter().find(|r| r.prevalence == prevalence)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "prevalence",
            "seeds",
            "mean_amplitude",
            "collapse_frequency",
            "mean_collapse_iterations",
            "mean_final_val_f1",
            "mean_selected_val_f1",
            "selected_collapses",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                format!("{}", r.prevalence),
                r.seeds.to_string(),
                format!("{:.6}", r.mean_amplitude),
                format!("{:.6}", r.collapse_frequency),
                format!("{:.6}", r.mean_collapse_iterations),
                format!("{:.6}", r.mean_final_val_f1),
                format!("{:.6}", r.mean_selected_val_f1),
                r.selected_collapses.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Runs every (prevalence, seed) pair and aggregates per prevalence.
/// Seeds run concurrently; results are aggregated in seed order.
pub fn run_instability_experiment(
    prevalences: &[f64],
    seeds: usize,
    params: &ExperimentParams,
) -> Result<(InstabilitySummary, Vec<SimTrace>), SimError> {
    if prevalences.is_empty() {
        return Err(SimError::InvalidParams("at least one prevalence is required".into()));
    }
    if seeds == 0 {
        return Err(SimError::InvalidParams("at least one seed is required".into()));
    }
    let mut rows = Vec::with_capacity(prevalences.len());
    let mut all_traces = Vec::with_capacity(prevalences.len() * seeds);
    for &p in prevalences {
        let traces: Vec<SimTrace> = (0..seeds as u64)
            .into_par_iter()
            .map(|s| run_trace(p, params.base_seed + s, params))
            .collect::<Result<_, _>>()?;
        rows.push(PrevalenceSummary {
            prevalence: p,
            seeds,
            mean_amplitude: mean(traces.iter().map(|t| t.oscillation_amplitude)),
            collapse_frequency: traces.iter().filter(|t| !t.collapse_iterations.is_empty()).count() as f64
                / seeds as f64,
            mean_collapse_iterations: mean(traces.iter().map(|t| t.collapse_iterations.len() as f64)),
            mean_final_val_f1: mean(traces.iter().map(SimTrace::final_val_f1)),
            mean_selected_val_f1: mean(traces.iter().map(SimTrace::selected_val_f1)),
            selected_collapses: traces
                .iter()
                .filter(|t| t.collapse_iterations.contains(&t.selected_index))
                .count(),
        });
        all_traces.extend(traces);
    }
    Ok((
        InstabilitySummary {
            params: params.clone(),
            rows,
        },
        all_traces,
    ))
}
