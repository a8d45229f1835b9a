use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    argmax_earliest, check_convergence, select_index, Convergence, DegradationBaseline, IterationRecord,
    PipelineError, RunOptions, TargetMetric, Termination, Thresholds, Trajectory,
};
use crate::agents::{
    Agents, Critique, DirectiveKind, ErrorKind, HistoryEntry, ParseStatus, Prediction, Prompt, Sop,
    Templates,
};
use crate::dataset::{Corpus, Note};
use crate::gateway::Backend;
use crate::metrics::{score, Metrics};

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub predictions: Vec<Prediction>,
    pub metrics: Metrics,
}

/// Per-iteration outputs that are persisted next to the trajectory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IterationArtifacts {
    pub predictions: Vec<Prediction>,
    /// Critiques behind the synthesis issued at this iteration, filtered ones included.
    pub critiques: Vec<Critique>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DevelopmentRun {
    pub trajectory: Trajectory,
    pub iterations: Vec<IterationArtifacts>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationEntry {
    pub t: usize,
    pub prompt_id: String,
    pub val_metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub selected_index: usize,
    pub entries: Vec<ValidationEntry>,
    pub dev_f1_selected: f64,
    pub val_f1_selected: f64,
    /// dev F1 minus val F1 for the selected prompt.
    pub dev_val_gap: f64,
}

impl ValidationReport {
    pub fn entry(&self, t: usize) -> Option<&ValidationEntry> {
        self.entries.iter().find(|e| e.t == t)
    }

    /// True when every trajectory iteration was evaluated on validation.
    pub fn covers(&self, records: usize) -> bool {
        (0..records).all(|t| self.entry(t).is_some())
    }
}

/// Runs the development and validation workflows against one backend.
pub struct Optimizer<'a> {
    agents: Agents<'a>,
    options: RunOptions,
    pool: Option<rayon::ThreadPool>,
}

impl<'a> Optimizer<'a> {
    pub fn new(backend: &'a dyn Backend, templates: &'a Templates, options: RunOptions) -> Result<Self, PipelineError> {
        if options.t_max < 1 {
            return Err(PipelineError::InvalidOptions("t_max must be at least 1".into()));
        }
        let pool = if options.parallelism > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(options.parallelism)
                    .build()
                    .map_err(|e| PipelineError::InvalidOptions(e.to_string()))?,
            )
        } else {
            None
        };
        Ok(Self {
            agents: Agents::new(backend, templates),
            options,
            pool,
        })
    }

    pub fn with_generation(mut self, temperature: f64, max_tokens: u32) -> Self {
        self.agents = self.agents.with_generation(temperature, max_tokens);
        self
    }

    pub fn options(&self) -> &RunOptions {
        &self.options
    }

    pub fn agents(&self) -> &Agents<'a> {
        &self.agents
    }

    /// Maps over notes, concurrently when a pool is configured. Output is
    /// always in input order.
    fn map_notes<T, F>(&self, notes: &[&Note], f: F) -> Result<Vec<T>, PipelineError>
    where
        T: Send,
        F: Fn(&Note) -> Result<T, PipelineError> + Sync + Send,
    {
        match &self.pool {
            Some(pool) => pool.install(|| notes.par_iter().map(|n| f(n)).collect()),
            None => notes.iter().map(|n| f(n)).collect(),
        }
    }

    /// Classifies every note. Any backend failure aborts the whole evaluation.
    pub fn evaluate(&self, prompt: &Prompt, sop: &Sop, corpus: &Corpus) -> Result<Evaluation, PipelineError> {
        let notes: Vec<&Note> = corpus.notes().iter().collect();
        let predictions = self.map_notes(&notes, |note| Ok(self.agents.classify(prompt, sop, note)?))?;
        let labels: Vec<u8> = predictions.iter().map(|p| p.label).collect();
        let metrics = score(&labels, &corpus.labels())?;
        Ok(Evaluation { predictions, metrics })
    }

    fn critique_errors(
        &self,
        prompt: &Prompt,
        sop: &Sop,
        corpus: &Corpus,
        predictions: &[Prediction],
        kind: ErrorKind,
    ) -> Result<Vec<Critique>, PipelineError> {
        let errors: Vec<&Note> = corpus
            .notes()
            .iter()
            .zip(predictions)
            .filter(|(note, pred)| ErrorKind::of(pred.label, note.label) == Some(kind))
            .map(|(note, _)| note)
            .collect();
        self.map_notes(&errors, |note| Ok(self.agents.critique(kind, prompt, sop, note)?))
    }

    /// Iterates from `p0` for at most `t_max` refinements, then applies the
    /// selection strategy.
    pub fn run_development(
        &self,
        p0: &Prompt,
        sop: &Sop,
        dev: &Corpus,
        thresholds: &Thresholds,
    ) -> Result<DevelopmentRun, PipelineError> {
        let opts = &self.options;
        let mut records: Vec<IterationRecord> = Vec::new();
        let mut iterations: Vec<IterationArtifacts> = Vec::new();
        let mut critique_cache: HashMap<(usize, ErrorKind), Vec<Critique>> = HashMap::new();
        let mut current = p0.clone();
        let mut current_reverted = false;
        let mut termination = Termination::MaxIterations;

        for t in 0..=opts.t_max {
            let eval = self.evaluate(&current, sop, dev)?;
            let metrics = eval.metrics;
            let mut record = IterationRecord {
                t,
                prompt: current.clone(),
                dev_metrics: metrics,
                target_metric: TargetMetric::None,
                critique_count: 0,
                filtered_count: 0,
                reverted: current_reverted,
                guidance: None,
                defaulted_parses: eval
                    .predictions
                    .iter()
                    .filter(|p| p.parse_status == ParseStatus::Defaulted)
                    .count(),
                predictions_ref: format!("iteration_{t}/predictions.jsonl"),
            };
            let mut artifacts = IterationArtifacts {
                predictions: eval.predictions,
                critiques: Vec::new(),
            };

            let convergence = check_convergence(&metrics, thresholds);
            if convergence == Convergence::Converged {
                termination = Termination::Converged;
                records.push(record);
                iterations.push(artifacts);
                break;
            }
            if t == opts.t_max {
                termination = Termination::MaxIterations;
                records.push(record);
                iterations.push(artifacts);
                break;
            }
            let mut direction = convergence.direction().expect("not converged");

            let prev_f1 = t.checked_sub(1).map(|p| records[p].dev_metrics.f1);
            if opts.guiding_enabled && prev_f1.is_some_and(|prev| metrics.f1 <= prev) {
                let mut history: Vec<HistoryEntry> = records
                    .iter()
                    .map(|r| HistoryEntry {
                        iteration: r.t,
                        metrics: r.dev_metrics,
                        target: r.target_metric.direction(),
                    })
                    .collect();
                history.push(HistoryEntry {
                    iteration: t,
                    metrics,
                    target: Some(direction),
                });
                let directive = self.agents.guide(&history, &current, sop)?;
                if directive.kind == DirectiveKind::SwitchTargetMetric {
                    direction = direction.flipped();
                }
                record.guidance = Some(directive);
            }

            let revert_to = if opts.degradation_prevention && t >= 1 {
                let baseline = match opts.degradation_baseline {
                    DegradationBaseline::Previous => t - 1,
                    DegradationBaseline::BestSoFar => {
                        argmax_earliest(&records.iter().map(|r| r.dev_metrics.f1).collect::<Vec<_>>())
                            .expect("records exist for t >= 1")
                    }
                };
                (metrics.f1 < records[baseline].dev_metrics.f1).then_some(baseline)
            } else {
                None
            };

            let (base_index, base_prompt, base_predictions) = match revert_to {
                Some(i) => (i, records[i].prompt.clone(), iterations[i].predictions.clone()),
                None => (t, current.clone(), artifacts.predictions.clone()),
            };
            // A reverted base may have no errors of the kind the current
            // prompt needs fixed; it is then improved on its own weakest metric.
            if revert_to.is_some() {
                let has_errors = dev
                    .notes()
                    .iter()
                    .zip(&base_predictions)
                    .any(|(n, p)| ErrorKind::of(p.label, n.label) == Some(direction.error_kind()));
                if !has_errors {
                    if let Some(d) = check_convergence(&records[base_index].dev_metrics, thresholds).direction() {
                        direction = d;
                    }
                }
            }
            record.target_metric = Some(direction).into();

            let kind = direction.error_kind();
            let critiques = match critique_cache.get(&(base_index, kind)) {
                Some(cached) => cached.clone(),
                None => {
                    let fresh = self.critique_errors(&base_prompt, sop, dev, &base_predictions, kind)?;
                    critique_cache.insert((base_index, kind), fresh.clone());
                    fresh
                }
            };
            if critiques.is_empty() {
                termination = Termination::NoErrors;
                records.push(record);
                iterations.push(artifacts);
                break;
            }
            let actionable: Vec<Critique> = critiques.iter().filter(|c| c.actionable).cloned().collect();
            record.critique_count = critiques.len();
            record.filtered_count = critiques.len() - actionable.len();
            artifacts.critiques = critiques;
            if actionable.is_empty() {
                termination = Termination::CritiquesExhausted;
                records.push(record);
                iterations.push(artifacts);
                break;
            }

            let failed = revert_to.map(|_| &current);
            let mut next = self
                .agents
                .synthesize(&actionable, &base_prompt, sop, direction, failed, record.guidance.as_ref())?;
            next.iteration = t + 1;
            next.id = crate::agents::prompt_id(t + 1);

            current_reverted = revert_to.is_some();
            records.push(record);
            iterations.push(artifacts);
            current = next;
        }

        let selected_index = select_index(
            &records.iter().map(|r| r.dev_metrics.f1).collect::<Vec<_>>(),
            opts.selection_strategy,
        );
        Ok(DevelopmentRun {
            trajectory: Trajectory {
                records,
                selected_index,
                selection_strategy: opts.selection_strategy,
                thresholds: *thresholds,
                t_max: opts.t_max,
                termination,
            },
            iterations,
        })
    }

    /// Evaluates the selected prompt on validation, and every other prompt
    /// too when `all_iterations` is set.
    pub fn run_validation(
        &self,
        trajectory: &Trajectory,
        sop: &Sop,
        val: &Corpus,
        all_iterations: bool,
    ) -> Result<ValidationReport, PipelineError> {
        let selected_index = trajectory.selected_index.ok_or(PipelineError::NoSelection)?;
        let selected = trajectory.records.get(selected_index).ok_or(PipelineError::NoSelection)?;
        let wanted: Vec<&IterationRecord> = if all_iterations {
            trajectory.records.iter().collect()
        } else {
            vec![selected]
        };
        let mut entries = Vec::with_capacity(wanted.len());
        for record in wanted {
            let eval = self.evaluate(&record.prompt, sop, val)?;
            entries.push(ValidationEntry {
                t: record.t,
                prompt_id: record.prompt.id.clone(),
                val_metrics: eval.metrics,
            });
        }
        let val_f1_selected = entries
            .iter()
            .find(|e| e.t == selected.t)
            .expect("selected prompt evaluated")
            .val_metrics
            .f1;
        let dev_f1_selected = selected.dev_metrics.f1;
        Ok(ValidationReport {
            selected_index,
            entries,
            dev_f1_selected,
            val_f1_selected,
            dev_val_gap: dev_val_gap(dev_f1_selected, val_f1_selected),
        })
    }
}

/// Gap between development and validation F1.
pub fn dev_val_gap(dev_f1: f64, val_f1: f64) -> f64 {
    dev_f1 - val_f1
}
