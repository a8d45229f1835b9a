use std::sync::Arc;

use promptforge::agents::{Agents, Prompt, Sop, Templates};
use promptforge::dataset::Split;
use promptforge::gateway::SimBackend;
use promptforge::simlab::{
    build_world, run_instability_experiment, run_trace, ExperimentParams, SimError, SimParams, BOUNDARY_TAG,
};

#[test]
fn simulated_specialist_is_an_exact_threshold() {
    let world = Arc::new(build_world(200, 0.12, 4, SimParams::default()).unwrap());
    let backend = SimBackend::new(Arc::clone(&world));
    let templates = Templates::builtin();
    let agents = Agents::new(&backend, &templates);
    let sop = Sop::default();
    for boundary in [-1.0, 0.3, 0.625, 1.4, 3.0] {
        let prompt = Prompt::initial(format!("brain fog\n{BOUNDARY_TAG} {boundary}"));
        for (split, corpus) in [(Split::Dev, world.dev()), (Split::Val, world.val())] {
            let scores = world.scores(split);
            for (note, score) in corpus.notes().iter().zip(scores) {
                let pred = agents.classify(&prompt, &sop, note).unwrap();
                assert_eq!(pred.label, u8::from(score >= boundary), "{} at {boundary}", note.id);
            }
        }
    }
}

#[test]
fn traces_are_deterministic() {
    let params = ExperimentParams::default();
    let a = run_trace(0.03, 11, &params).unwrap();
    let b = run_trace(0.03, 11, &params).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_csv(), b.to_csv());
    assert!(a.to_csv().starts_with("iteration,boundary,dev_sensitivity,"));
    assert_ne!(a, run_trace(0.03, 12, &params).unwrap());
}

#[test]
fn trace_invariants() {
    let params = ExperimentParams::default();
    for seed in 0..10 {
        let tr = run_trace(0.03, seed, &params).unwrap();
        assert!(tr.points.len() <= params.t_max + 1);
        let sens: Vec<f64> = tr.points.iter().filter_map(|p| p.val.sensitivity).collect();
        let hi = sens.iter().copied().fold(f64::MIN, f64::max);
        let lo = sens.iter().copied().fold(f64::MAX, f64::min);
        assert_eq!(tr.oscillation_amplitude, hi - lo);
        let collapses: Vec<usize> = tr
            .points
            .iter()
            .filter(|p| p.val.sensitivity == Some(0.0))
            .map(|p| p.t)
            .collect();
        assert_eq!(tr.collapse_iterations, collapses);
    }
}

#[test]
fn no_perturbation_means_no_oscillation() {
    let params = ExperimentParams {
        sim: SimParams {
            noise_scale: 0.0,
            step_gain: 1e-9,
            ..SimParams::default()
        },
        ..ExperimentParams::default()
    };
    let (summary, _) = run_instability_experiment(&[0.03, 0.12, 0.23], 5, &params).unwrap();
    for row in &summary.rows {
        assert!(row.mean_amplitude < 1e-6, "{row:?}");
        assert_eq!(row.collapse_frequency, 0.0);
    }
}

#[test]
fn single_prevalence_single_seed() {
    let (summary, traces) = run_instability_experiment(&[0.12], 1, &ExperimentParams::default()).unwrap();
    assert_eq!(summary.rows.len(), 1);
    assert_eq!(traces.len(), 1);
    assert_eq!(summary.rows[0].seeds, 1);
    assert_eq!(summary.to_csv().lines().count(), 2);
}

#[test]
fn invalid_inputs_are_rejected() {
    let params = ExperimentParams::default();
    assert!(matches!(run_instability_experiment(&[], 3, &params), Err(SimError::InvalidParams(_))));
    assert!(matches!(run_instability_experiment(&[0.1], 0, &params), Err(SimError::InvalidParams(_))));
    assert!(run_instability_experiment(&[1.5], 1, &params).is_err());
    let bad = SimParams {
        separation: 0.0,
        ..SimParams::default()
    };
    assert!(matches!(build_world(100, 0.1, 0, bad), Err(SimError::InvalidParams(_))));
}

/// Best-dev-F1 selection avoids validation collapse whenever some
/// non-collapsed iteration has positive dev F1.
#[test]
fn selector_avoids_collapse_iterations() {
    let params = ExperimentParams::default();
    let (_, traces) = run_instability_experiment(&[0.03, 0.12, 0.23], 50, &params).unwrap();
    let violations: Vec<(f64, u64)> = traces
        .iter()
        .filter(|t| {
            let alternative = t
                .points
                .iter()
                .any(|p| !t.collapse_iterations.contains(&p.t) && p.dev.f1 > 0.0);
            alternative && t.collapse_iterations.contains(&t.selected_index)
        })
        .map(|t| (t.prevalence, t.seed))
        .collect();
    assert!(violations.is_empty(), "selected a collapse iteration: {violations:?}");
}
