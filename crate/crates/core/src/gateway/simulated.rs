use std::sync::Arc;
use std::time::Duration;

use super::{Backend, BackendTag, GatewayError, ModelRequest, ModelResponse};
use crate::agents::{Direction, Role, NON_ACTIONABLE_MARKER};
use crate::dataset::CueKind;
use crate::simlab::{stable_hash, unit_from_hash, SimWorld, BOUNDARY_TAG};

fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let len = text[start..].find(close)?;
    Some(text[start..start + len].trim_matches('\n'))
}

fn sim_err(msg: impl Into<String>) -> GatewayError {
    GatewayError::Simulator(msg.into())
}

/// Answers a request from world state alone.
///
/// The role is read from the `ROLE:` marker on the first line of the system
/// text; the note, prompt and critique blocks are read from their tags.
pub fn simulate_complete(request: &ModelRequest, world: &SimWorld) -> Result<ModelResponse, GatewayError> {
    let role = Role::from_system_text(&request.system_text).ok_or_else(|| {
        sim_err(format!(
            "unrecognized role marker {:?}",
            request.system_text.lines().next().unwrap_or("")
        ))
    })?;
    let text = match role {
        Role::Specialist => specialist(request, world)?,
        Role::SensitivityImprover | Role::SpecificityImprover => improver(role, request, world)?,
        Role::SensitivitySummarizer => summarizer(Direction::Sensitivity, request, world)?,
        Role::SpecificitySummarizer => summarizer(Direction::Specificity, request, world)?,
        Role::Guiding => guiding(request, world),
    };
    Ok(ModelResponse {
        text,
        backend_tag: BackendTag::Simulated,
        latency: Duration::ZERO,
    })
}

fn note_facts<'w>(request: &ModelRequest, world: &'w SimWorld) -> Result<&'w crate::simlab::NoteFacts, GatewayError> {
    let note = between(&request.user_text, "<note>", "</note>").ok_or_else(|| sim_err("request has no <note> block"))?;
    world.facts(note).ok_or_else(|| sim_err("note is not part of the simulated world"))
}

fn specialist(request: &ModelRequest, world: &SimWorld) -> Result<String, GatewayError> {
    let facts = note_facts(request, world)?;
    let prompt = between(&request.system_text, "<prompt>", "</prompt>").unwrap_or("");
    let positive = facts.score >= world.boundary_of(prompt);
    // A few answers carry punctuation so the normalizing parser is exercised.
    let chatty = unit_from_hash(stable_hash(&[b"fmt", facts.id.as_bytes(), &world.seed.to_le_bytes()])) < 0.1;
    Ok(match (positive, chatty) {
        (true, false) => "yes".into(),
        (false, false) => "no".into(),
        (true, true) => "Yes.".into(),
        (false, true) => "No.".into(),
    })
}

fn improver(role: Role, request: &ModelRequest, world: &SimWorld) -> Result<String, GatewayError> {
    let facts = note_facts(request, world)?;
    let roll = unit_from_hash(stable_hash(&[
        role.name().as_bytes(),
        facts.id.as_bytes(),
        &world.seed.to_le_bytes(),
    ]));
    if roll < world.params.non_actionable_rate {
        return Ok(NON_ACTIONABLE_MARKER.into());
    }
    let term = &world.params.term;
    Ok(match (role, facts.cue_kind) {
        (Role::SensitivityImprover, _) => format!(
            "The criteria missed the positive signal \"{}\" ({} paraphrase of {term}). Add this phrasing as an inclusion pattern.",
            facts.cue,
            facts.family.as_deref().unwrap_or("unlisted")
        ),
        (_, CueKind::Hedged) => format!(
            "The note says \"{}\", a negated mention of {term}. Add an exclusion rule for denied or historical mentions.",
            facts.cue
        ),
        _ => format!(
            "The note describes \"{}\", which is unrelated to {term}. Require explicit evidence of {term} itself.",
            facts.cue
        ),
    })
}

fn summarizer(direction: Direction, request: &ModelRequest, world: &SimWorld) -> Result<String, GatewayError> {
    let base = between(&request.user_text, "<current_prompt>", "</current_prompt>")
        .ok_or_else(|| sim_err("summarizer request has no <current_prompt> block"))?;
    let errors = request.user_text.lines().filter(|l| l.starts_with("- [")).count();
    let class_count = world.class_count(direction);
    let salt = stable_hash(&[request.system_text.as_bytes(), request.user_text.as_bytes()]);
    let from = world.boundary_of(base);
    let mut next = world.apply_synthesis_step(from, direction, errors, class_count, salt);
    if request.user_text.contains("<guidance>") {
        next = from + (next - from) * world.params.guidance_gain;
    }
    let action = match direction {
        Direction::Sensitivity => "Expanded detection patterns",
        Direction::Specificity => "Tightened exclusion rules",
    };
    let reverted = if request.user_text.contains("<failed_prompt>") {
        " after a failed revision"
    } else {
        ""
    };
    Ok(format!(
        "{}\n{action} from {errors} critiques{reverted}.\n{BOUNDARY_TAG} {next}",
        world.params.term
    ))
}

fn guiding(request: &ModelRequest, world: &SimWorld) -> String {
    let h = stable_hash(&[b"guide", request.user_text.as_bytes(), &world.seed.to_le_bytes()]);
    if h.is_multiple_of(2) {
        "DIRECTIVE: switch_target_metric\nGUIDANCE: Progress on the current metric has stalled; work on the other metric next.".into()
    } else {
        "DIRECTIVE: rewrite_strategy\nGUIDANCE: Rewrite the criteria around the most frequent error pattern and commit to it.".into()
    }
}

/// [`Backend`] over a shared [`SimWorld`].
#[derive(Debug, Clone)]
pub struct SimBackend {
    world: Arc<SimWorld>,
}

impl SimBackend {
    pub fn new(world: Arc<SimWorld>) -> Self {
        Self { world }
    }

    pub fn world(&self) -> &SimWorld {
        &self.world
    }
}

impl Backend for SimBackend {
    fn complete(&self, request: &ModelRequest) -> Result<ModelResponse, GatewayError> {
        simulate_complete(request, &self.world)
    }
}
