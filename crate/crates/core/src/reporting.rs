//! Trajectory diagnostics and report tables, all recomputable from run artifacts.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{masking_flag, Metrics};
use crate::pipeline::artifacts::{self, ArtifactError};
use crate::pipeline::{argmax_earliest, Trajectory, ValidationReport};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("{condition}: missing validation metrics for iteration {t}")]
    MissingValidation { condition: String, t: usize },
    #[error("oscillation needs at least 2 validated iterations, got {0}")]
    TooFewIterations(usize),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// `(new - old) / old` as an integer percent, rounded half away from zero.
/// `None` when `old` is zero.
pub fn percent_delta(old: f64, new: f64) -> Option<i64> {
    if old == 0.0 {
        return None;
    }
    // Snap float noise such as 44.99999999 before rounding.
    let pct = ((new - old) / old * 100.0 * 1e9).round() / 1e9;
    Some(pct.round() as i64)
}

pub fn format_percent(delta: Option<i64>) -> String {
    match delta {
        None => "n/a".into(),
        Some(0) => "0%".into(),
        Some(d) if d > 0 => format!("+{d}%"),
        Some(d) => format!("{d}%"),
    }
}

/// One optimized condition with its validation results.
#[derive(Debug, Clone)]
pub struct ConditionRun<'a> {
    pub condition: &'a str,
    pub prevalence: f64,
    pub trajectory: &'a Trajectory,
    pub validation: &'a ValidationReport,
}

fn val_metrics(run: &ConditionRun<'_>, t: usize) -> Result<Metrics, ReportError> {
    run.validation
        .entry(t)
        .map(|e| e.val_metrics)
        .ok_or_else(|| ReportError::MissingValidation {
            condition: run.condition.to_string(),
            t,
        })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub condition: String,
    pub prevalence: f64,
    pub first_f1: f64,
    pub final_f1: f64,
    pub delta_percent: Option<i64>,
}

/// Validation F1 at the first vs. the final iteration.
pub fn degradation_table(runs: &[ConditionRun<'_>]) -> Result<Vec<DegradationRow>, ReportError> {
    runs.iter()
        .map(|run| {
            let last = run.trajectory.records.len() - 1;
            let first_f1 = val_metrics(run, 0)?.f1;
            let final_f1 = val_metrics(run, last)?.f1;
            Ok(DegradationRow {
                condition: run.condition.to_string(),
                prevalence: run.prevalence,
                first_f1,
                final_f1,
                delta_percent: percent_delta(first_f1, final_f1),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub condition: String,
    pub prevalence: f64,
    pub optimized_f1: f64,
    pub lexicon_f1: f64,
    pub delta_percent: Option<i64>,
}

pub fn comparison_row(condition: &str, prevalence: f64, optimized: &Metrics, lexicon: &Metrics) -> ComparisonRow {
    ComparisonRow {
        condition: condition.to_string(),
        prevalence,
        optimized_f1: optimized.f1,
        lexicon_f1: lexicon.f1,
        delta_percent: percent_delta(lexicon.f1, optimized.f1),
    }
}

/// Selected-prompt validation F1 against the lexicon on the same corpus.
pub fn comparison_table(rows: &[(&str, f64, Metrics, Metrics)]) -> Vec<ComparisonRow> {
    rows.iter()
        .map(|(c, p, opt, lex)| comparison_row(c, *p, opt, lex))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OscillationReport {
    pub amplitude: f64,
    pub collapse_iterations: Vec<usize>,
    pub masking_iterations: Vec<usize>,
}

/// Amplitude of validation sensitivity plus collapse and masking iterations.
///
/// Undefined sensitivity (no positives) is skipped for the amplitude and
/// never counts as a collapse.
pub fn oscillation_report(val: &[Metrics], prevalence: f64) -> OscillationReport {
    let sens: Vec<f64> = val.iter().filter_map(|m| m.sensitivity).collect();
    let amplitude = match (
        sens.iter().copied().reduce(f64::max),
        sens.iter().copied().reduce(f64::min),
    ) {
        (Some(hi), Some(lo)) => hi - lo,
        _ => 0.0,
    };
    OscillationReport {
        amplitude,
        collapse_iterations: val
            .iter()
            .enumerate()
            .filter(|(_, m)| m.sensitivity == Some(0.0))
            .map(|(t, _)| t)
            .collect(),
        masking_iterations: val
            .iter()
            .enumerate()
            .filter(|(_, m)| masking_flag(m, prevalence))
            .map(|(t, _)| t)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedVsOptimal {
    pub condition: String,
    pub selected_index: usize,
    pub selected_val_f1: f64,
    pub optimal_index: usize,
    pub optimal_val_f1: f64,
    /// optimal minus selected validation F1.
    pub gap: f64,
}

pub fn selected_vs_optimal(run: &ConditionRun<'_>) -> Result<SelectedVsOptimal, ReportError> {
    let n = run.trajectory.records.len();
    let val_f1: Vec<f64> = (0..n).map(|t| val_metrics(run, t).map(|m| m.f1)).collect::<Result<_, _>>()?;
    let selected_index = run.validation.selected_index;
    let optimal_index = argmax_earliest(&val_f1).expect("trajectory is non-empty");
    Ok(SelectedVsOptimal {
        condition: run.condition.to_string(),
        selected_index,
        selected_val_f1: val_f1[selected_index],
        optimal_index,
        optimal_val_f1: val_f1[optimal_index],
        gap: val_f1[optimal_index] - val_f1[selected_index],
    })
}

fn csv_string(header: &[&str], rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

fn f3(x: f64) -> String {
    format!("{x:.3}")
}

fn rate(x: Option<f64>) -> String {
    x.map_or(String::new(), f3)
}

pub fn degradation_csv(rows: &[DegradationRow]) -> String {
    csv_string(
        &["condition", "prevalence", "first_iter_f1", "final_iter_f1", "delta"],
        rows.iter()
            .map(|r| {
                vec![
                    r.condition.clone(),
                    f3(r.prevalence),
                    f3(r.first_f1),
                    f3(r.final_f1),
                    format_percent(r.delta_percent),
                ]
            })
            .collect(),
    )
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    csv_string(
        &["condition", "prevalence", "optimized_f1", "lexicon_f1", "delta"],
        rows.iter()
            .map(|r| {
                vec![
                    r.condition.clone(),
                    f3(r.prevalence),
                    f3(r.optimized_f1),
                    f3(r.lexicon_f1),
                    format_percent(r.delta_percent),
                ]
            })
            .collect(),
    )
}

pub fn selected_vs_optimal_csv(rows: &[SelectedVsOptimal]) -> String {
    csv_string(
        &["condition", "selected_iteration", "selected_val_f1", "optimal_iteration", "optimal_val_f1", "gap"],
        rows.iter()
            .map(|r| {
                vec![
                    r.condition.clone(),
                    r.selected_index.to_string(),
                    f3(r.selected_val_f1),
                    r.optimal_index.to_string(),
                    f3(r.optimal_val_f1),
                    f3(r.gap),
                ]
            })
            .collect(),
    )
}

/// Per-iteration validation curve (plus dev F1) for plotting.
pub fn figure_csv(run: &ConditionRun<'_>) -> Result<String, ReportError> {
    let mut rows = Vec::new();
    for record in &run.trajectory.records {
        let v = val_metrics(run, record.t)?;
        rows.push(vec![
            record.t.to_string(),
            rate(v.sensitivity),
            rate(v.specificity),
            f3(v.f1),
            f3(v.accuracy),
            f3(record.dev_metrics.f1),
            masking_flag(&v, run.prevalence).to_string(),
        ]);
    }
    Ok(csv_string(
        &[
            "iteration",
            "val_sensitivity",
            "val_specificity",
            "val_f1",
            "val_accuracy",
            "dev_f1",
            "accuracy_masking",
        ],
        rows,
    ))
}

/// Renders every report file for one run directory, keyed by file name.
///
/// Only reads artifacts; `comparison.csv` is produced when the run has a
/// lexicon baseline.
pub fn render_report(run_dir: &Path) -> Result<BTreeMap<&'static str, String>, ReportError> {
    let manifest = artifacts::load_manifest(run_dir)?;
    let trajectory = artifacts::load_trajectory(run_dir)?;
    let validation = artifacts::load_validation(run_dir)?;
    let baseline = artifacts::load_baseline(run_dir)?;
    let run = ConditionRun {
        condition: &manifest.condition,
        prevalence: manifest.val_prevalence,
        trajectory: &trajectory,
        validation: &validation,
    };

    let mut out = BTreeMap::new();
    out.insert("degradation.csv", degradation_csv(&degradation_table(std::slice::from_ref(&run))?));
    if let Some(b) = &baseline {
        let selected = val_metrics(&run, validation.selected_index)?;
        let row = comparison_row(run.condition, run.prevalence, &selected, &b.val_metrics);
        out.insert("comparison.csv", comparison_csv(&[row]));
    }
    let n = trajectory.records.len();
    let val: Vec<Metrics> = (0..n).map(|t| val_metrics(&run, t)).collect::<Result<_, _>>()?;
    let osc = oscillation_report(&val, run.prevalence);
    let mut osc_json = serde_json::to_string_pretty(&osc).expect("serializes");
    osc_json.push('\n');
    out.insert("oscillation.json", osc_json);
    out.insert("selected_vs_optimal.csv", selected_vs_optimal_csv(&[selected_vs_optimal(&run)?]));
    out.insert("figure2a.csv", figure_csv(&run)?);
    Ok(out)
}

/// Writes [`render_report`] output into `out_dir`.
pub fn write_report(run_dir: &Path, out_dir: &Path) -> Result<Vec<String>, ReportError> {
    let files = render_report(run_dir)?;
    fs::create_dir_all(out_dir).map_err(|source| ReportError::Io {
        path: out_dir.display().to_string(),
        source,
    })?;
    let mut written = Vec::new();
    for (name, contents) in files {
        let path = out_dir.join(name);
        fs::write(&path, contents).map_err(|source| ReportError::Io {
            path: path.display().to_string(),
            source,
        })?;
        written.push(name.to_string());
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::{metrics_from_counts, ConfusionCounts};

    #[test]
    fn percent_examples() {
        assert_eq!(format_percent(percent_delta(0.25, 0.09)), "-64%");
        assert_eq!(format_percent(percent_delta(0.72, 0.60)), "-17%");
        assert_eq!(format_percent(percent_delta(0.75, 0.41)), "-45%");
        assert_eq!(format_percent(percent_delta(0.4, 0.4)), "0%");
        assert_eq!(format_percent(percent_delta(0.058, 0.25)), "+331%");
        assert_eq!(format_percent(percent_delta(0.79, 0.75)), "-5%");
        assert_eq!(format_percent(percent_delta(0.67, 0.72)), "+7%");
        assert_eq!(format_percent(percent_delta(0.0, 0.3)), "n/a");
    }

    #[test]
    fn percent_rounds_half_away_from_zero() {
        assert_eq!(percent_delta(2.0, 2.01), Some(1)); // +0.5%
        assert_eq!(percent_delta(2.0, 1.99), Some(-1)); // -0.5%
        assert_eq!(percent_delta(1.0, 1.004), Some(0));
    }

    /// Metrics with a given sensitivity over 10 positives and 190 negatives.
    fn with_sens(tp: usize, fp: usize) -> Metrics {
        metrics_from_counts(ConfusionCounts::new(tp, fp, 190 - fp, 10 - tp))
    }

    #[test]
    fn oscillation_example() {
        let val: Vec<Metrics> = [10, 4, 0, 8, 2, 0, 3].iter().map(|&tp| with_sens(tp, 5)).collect();
        let r = oscillation_report(&val, 0.05);
        assert_eq!(r.amplitude, 1.0);
        assert_eq!(r.collapse_iterations, vec![2, 5]);
        let flat: Vec<Metrics> = (0..4).map(|_| with_sens(5, 5)).collect();
        let r = oscillation_report(&flat, 0.05);
        assert_eq!(r.amplitude, 0.0);
        assert!(r.collapse_iterations.is_empty());
    }

    #[test]
    fn masking_iteration_detected() {
        let blind = metrics_from_counts(ConfusionCounts::new(0, 0, 194, 6));
        let seeing = metrics_from_counts(ConfusionCounts::new(3, 10, 184, 3));
        let r = oscillation_report(&[seeing, blind], 0.03);
        assert_eq!(r.masking_iterations, vec![1]);
        assert_eq!(r.collapse_iterations, vec![1]);
    }

    #[test]
    fn comparison_division_guard() {
        let zero = metrics_from_counts(ConfusionCounts::new(0, 0, 194, 6));
        let some = metrics_from_counts(ConfusionCounts::new(3, 3, 191, 3));
        assert_eq!(comparison_row("x", 0.03, &some, &zero).delta_percent, None);
        assert_eq!(comparison_row("x", 0.03, &some, &some).delta_percent, Some(0));
    }
}
