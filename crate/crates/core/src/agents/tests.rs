use std::sync::atomic::{AtomicUsize, Ordering};

use super::*;
use crate::gateway::{FnBackend, GatewayError, ModelRequest};
use crate::metrics::{metrics_from_counts, ConfusionCounts};

fn note(id: &str, label: u8) -> Note {
    Note {
        id: id.into(),
        text: format!("text of {id}"),
        label,
    }
}

fn critique(id: &str, kind: ErrorKind) -> Critique {
    Critique {
        note_id: id.into(),
        error_kind: kind,
        text: format!("fix {id}"),
        actionable: true,
    }
}

fn role_of(req: &ModelRequest) -> Role {
    Role::from_system_text(&req.system_text).expect("templates carry a role marker")
}

#[test]
fn classify_clean_and_normalized() {
    let templates = Templates::builtin();
    let sop = Sop::default();
    let p = Prompt::initial("brain fog");
    for (reply, label, status) in [
        ("yes", 1, ParseStatus::Clean),
        ("no", 0, ParseStatus::Clean),
        ("Yes.", 1, ParseStatus::Normalized),
        ("  NO, not present", 0, ParseStatus::Normalized),
    ] {
        let backend = FnBackend::new(move |_: &ModelRequest| Ok(reply.to_string()));
        let pred = Agents::new(&backend, &templates).classify(&p, &sop, &note("a", 1)).unwrap();
        assert_eq!((pred.label, pred.parse_status), (label, status), "{reply:?}");
        assert_eq!(backend.call_count(), 1);
    }
}

#[test]
fn classify_retries_once_then_defaults() {
    let templates = Templates::builtin();
    let sop = Sop::default();
    let p = Prompt::initial("brain fog");

    let n = AtomicUsize::new(0);
    let backend = FnBackend::new(move |_: &ModelRequest| {
        Ok(if n.fetch_add(1, Ordering::SeqCst) == 0 { "maybe".into() } else { "yes".into() })
    });
    let pred = Agents::new(&backend, &templates).classify(&p, &sop, &note("a", 1)).unwrap();
    assert_eq!((pred.label, pred.parse_status), (1, ParseStatus::Retried));
    let calls = backend.calls();
    assert_eq!(calls.len(), 2);
    assert!(calls[1].user_text.ends_with(CLARIFICATION));

    let backend = FnBackend::new(|_: &ModelRequest| Ok("I cannot say".to_string()));
    let pred = Agents::new(&backend, &templates).classify(&p, &sop, &note("a", 1)).unwrap();
    assert_eq!((pred.label, pred.parse_status), (0, ParseStatus::Defaulted));
    assert_eq!(backend.call_count(), 2);
}

#[test]
fn classify_request_carries_prompt_note_and_generation_settings() {
    let templates = Templates::builtin();
    let backend = FnBackend::new(|_: &ModelRequest| Ok("no".to_string()));
    Agents::new(&backend, &templates)
        .classify(&Prompt::initial("chest pain"), &Sop::default(), &note("n7", 0))
        .unwrap();
    let req = &backend.calls()[0];
    assert_eq!(role_of(req), Role::Specialist);
    assert!(req.system_text.contains("<prompt>\nchest pain\n</prompt>"));
    assert!(req.user_text.contains("text of n7"));
    assert_eq!(req.temperature, 0.0);
    assert_eq!(req.max_tokens, 2048);
}

#[test]
fn transport_errors_propagate() {
    let templates = Templates::builtin();
    let backend = FnBackend::new(|_: &ModelRequest| {
        Err(GatewayError::Transport {
            attempts: 3,
            message: "refused".into(),
        })
    });
    let err = Agents::new(&backend, &templates)
        .classify(&Prompt::initial("x"), &Sop::default(), &note("a", 0))
        .unwrap_err();
    assert!(matches!(err, AgentError::Gateway(ref g) if g.is_transport()));
}

#[test]
fn critique_routes_to_the_matching_improver() {
    let templates = Templates::builtin();
    let backend = FnBackend::new(|req: &ModelRequest| Ok(format!("critique from {}", role_of(req).name())));
    let agents = Agents::new(&backend, &templates);
    let p = Prompt::initial("x");
    let sop = Sop::default();
    let fp = agents.critique_false_positive(&p, &sop, &note("a", 0)).unwrap();
    let fn_ = agents.critique_false_negative(&p, &sop, &note("b", 1)).unwrap();
    assert_eq!(fp.error_kind, ErrorKind::FalsePositive);
    assert_eq!(fn_.error_kind, ErrorKind::FalseNegative);
    let roles: Vec<Role> = backend.calls().iter().map(role_of).collect();
    assert_eq!(roles, [Role::SpecificityImprover, Role::SensitivityImprover]);
    assert!(fp.actionable && fn_.actionable);
}

#[test]
fn non_actionable_critiques_are_flagged() {
    let templates = Templates::builtin();
    let p = Prompt::initial("x");
    let sop = Sop::default();
    for reply in [NON_ACTIONABLE_MARKER.to_string(), "   ".to_string(), format!("hmm\n{NON_ACTIONABLE_MARKER}\n")] {
        let backend = FnBackend::new(move |_: &ModelRequest| Ok(reply.clone()));
        let c = Agents::new(&backend, &templates)
            .critique_false_negative(&p, &sop, &note("a", 1))
            .unwrap();
        assert!(!c.actionable);
    }
}

#[test]
fn synthesize_builds_child_prompt() {
    let templates = Templates::builtin();
    let backend = FnBackend::new(|_: &ModelRequest| Ok("  revised criteria  ".to_string()));
    let agents = Agents::new(&backend, &templates);
    let base = Prompt::initial("brain fog");
    let crits = [critique("a", ErrorKind::FalseNegative), critique("b", ErrorKind::FalseNegative)];
    let p1 = agents
        .synthesize(&crits, &base, &Sop::default(), Direction::Sensitivity, None, None)
        .unwrap();
    assert_eq!(p1.text, "revised criteria");
    assert_eq!((p1.id.as_str(), p1.iteration), ("p1", 1));
    assert_eq!(p1.parent_id.as_deref(), Some("p0"));
    assert_eq!(p1.origin, PromptOrigin::SensitivitySynthesis);

    let req = &backend.calls()[0];
    assert_eq!(role_of(req), Role::SensitivitySummarizer);
    assert!(req.user_text.contains("- [a] fix a"));
    assert!(req.user_text.contains("- [b] fix b"));
    assert!(!req.user_text.contains("<failed_prompt>"));
    assert!(!req.user_text.contains("<guidance>"));
}

#[test]
fn revert_synthesis_shows_failed_prompt() {
    let templates = Templates::builtin();
    let backend = FnBackend::new(|_: &ModelRequest| Ok("second try".to_string()));
    let agents = Agents::new(&backend, &templates);
    let base = Prompt {
        id: "p1".into(),
        iteration: 1,
        text: "base criteria".into(),
        origin: PromptOrigin::SensitivitySynthesis,
        parent_id: Some("p0".into()),
    };
    let failed = Prompt {
        id: "p2".into(),
        iteration: 2,
        text: "failed criteria".into(),
        origin: PromptOrigin::SpecificitySynthesis,
        parent_id: Some("p1".into()),
    };
    let guidance = GuidanceDirective {
        kind: DirectiveKind::RewriteStrategy,
        text: "focus on duration".into(),
        triggered_at: 2,
    };
    let p3 = agents
        .synthesize(
            &[critique("a", ErrorKind::FalsePositive)],
            &base,
            &Sop::default(),
            Direction::Specificity,
            Some(&failed),
            Some(&guidance),
        )
        .unwrap();
    assert_eq!((p3.id.as_str(), p3.iteration), ("p3", 3));
    assert_eq!(p3.parent_id.as_deref(), Some("p1"));
    assert_eq!(p3.origin, PromptOrigin::RevertSynthesis);
    let req = &backend.calls()[0];
    assert_eq!(role_of(req), Role::SpecificitySummarizer);
    assert!(req.user_text.contains("base criteria"));
    assert!(req.user_text.contains("<failed_prompt>\nfailed criteria\n</failed_prompt>"));
    assert!(req.user_text.contains("focus on duration"));
}

#[test]
fn synthesize_preconditions() {
    let templates = Templates::builtin();
    let backend = FnBackend::new(|_: &ModelRequest| Ok(String::new()));
    let agents = Agents::new(&backend, &templates);
    let base = Prompt::initial("x");
    let sop = Sop::default();
    assert!(matches!(
        agents.synthesize(&[], &base, &sop, Direction::Sensitivity, None, None),
        Err(AgentError::NothingToSynthesize)
    ));
    let mut dud = critique("a", ErrorKind::FalseNegative);
    dud.actionable = false;
    assert!(matches!(
        agents.synthesize(&[dud], &base, &sop, Direction::Sensitivity, None, None),
        Err(AgentError::Precondition(_))
    ));
    assert!(matches!(
        agents.synthesize(&[critique("a", ErrorKind::FalsePositive)], &base, &sop, Direction::Sensitivity, None, None),
        Err(AgentError::Precondition(_))
    ));
    assert_eq!(backend.call_count(), 0);
    assert!(matches!(
        agents.synthesize(&[critique("a", ErrorKind::FalseNegative)], &base, &sop, Direction::Sensitivity, None, None),
        Err(AgentError::EmptyResponse(Role::SensitivitySummarizer))
    ));
}

fn entry(t: usize, tp: usize, fp: usize) -> HistoryEntry {
    HistoryEntry {
        iteration: t,
        metrics: metrics_from_counts(ConfusionCounts::new(tp, fp, 50 - fp, 10 - tp)),
        target: Some(Direction::Sensitivity),
    }
}

#[test]
fn guide_requires_stall_and_parses_directive() {
    let templates = Templates::builtin();
    let backend = FnBackend::new(|_: &ModelRequest| {
        Ok("DIRECTIVE: switch_target_metric\nGUIDANCE: work on false positives instead".to_string())
    });
    let agents = Agents::new(&backend, &templates);
    let p = Prompt::initial("x");
    let sop = Sop::default();

    let improving = [entry(0, 4, 5), entry(1, 8, 5)];
    assert!(matches!(agents.guide(&improving, &p, &sop), Err(AgentError::Precondition(_))));
    assert!(matches!(agents.guide(&improving[..1], &p, &sop), Err(AgentError::Precondition(_))));
    assert_eq!(backend.call_count(), 0);

    let stalled = [entry(0, 8, 5), entry(1, 4, 5)];
    let g = agents.guide(&stalled, &p, &sop).unwrap();
    assert_eq!(g.kind, DirectiveKind::SwitchTargetMetric);
    assert_eq!(g.text, "work on false positives instead");
    assert_eq!(g.triggered_at, 2);
    let req = &backend.calls()[0];
    assert_eq!(role_of(req), Role::Guiding);
    assert!(req.user_text.contains("t=1"));
}
