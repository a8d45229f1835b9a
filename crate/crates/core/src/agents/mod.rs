//! The role agents: each is a template plus a response parser over a [`Backend`].
//!
//! * Specialist: classifies one note under the current prompt.
//! * Sensitivity / specificity improvers: critique one false negative / false positive.
//! * Sensitivity / specificity summarizers: fold critiques into a revised prompt.
//! * Guiding: issues a directive when development F1 stalls.
//!
//! The built-in templates are reconstructions written for this crate; they
//! live in `templates/` and can be overridden per role from a directory.

mod parse;
mod templates;

pub use parse::{parse_answer, parse_directive, AnswerParse, NON_ACTIONABLE_MARKER};
pub use templates::{fill, Role, RoleTemplate, Templates, ROLE_PREFIX};

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Note;
use crate::gateway::{Backend, GatewayError, ModelRequest, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::metrics::Metrics;

/// Appended to the specialist's user text when the first answer is ambiguous.
pub const CLARIFICATION: &str = "\n\nYour previous answer could not be interpreted. Reply with exactly one word: yes or no.";

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("nothing to synthesize")]
    NothingToSynthesize,
    #[error("{0} returned an empty response")]
    EmptyResponse(Role),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("template error: {0}")]
    Template(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptOrigin {
    Initial,
    SensitivitySynthesis,
    SpecificitySynthesis,
    RevertSynthesis,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: String,
    pub iteration: usize,
    pub text: String,
    pub origin: PromptOrigin,
    pub parent_id: Option<String>,
}

impl Prompt {
    /// Iteration-0 prompt; for the standard protocol this is the bare symptom term.
    pub fn initial(text: impl Into<String>) -> Self {
        let text = text.into();
        assert!(!text.trim().is_empty(), "initial prompt must not be empty");
        Self {
            id: prompt_id(0),
            iteration: 0,
            text,
            origin: PromptOrigin::Initial,
            parent_id: None,
        }
    }
}

pub fn prompt_id(iteration: usize) -> String {
    format!("p{iteration}")
}

/// Fixed task framing shared by every agent call.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sop {
    text: String,
}

pub const DEFAULT_SOP: &str = include_str!("../../assets/sop.txt");

impl Sop {
    /// The text must carry the answer contract, i.e. mention both `yes` and `no`.
    pub fn new(text: impl Into<String>) -> Result<Self, AgentError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(AgentError::Precondition("SOP is empty".into()));
        }
        let words: Vec<String> = text
            .split(|c: char| !c.is_alphanumeric())
            .map(str::to_lowercase)
            .collect();
        if !(words.iter().any(|w| w == "yes") && words.iter().any(|w| w == "no")) {
            return Err(AgentError::Precondition(
                "SOP must state the answer tokens \"yes\" and \"no\"".into(),
            ));
        }
        Ok(Self { text })
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

impl Default for Sop {
    fn default() -> Self {
        Self::new(DEFAULT_SOP).expect("bundled SOP is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Clean,
    Normalized,
    Retried,
    Defaulted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub note_id: String,
    pub label: u8,
    pub raw_text: String,
    pub parse_status: ParseStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    FalsePositive,
    FalseNegative,
}

impl ErrorKind {
    /// Classifies one (prediction, label) pair; `None` when correct.
    pub fn of(prediction: u8, label: u8) -> Option<ErrorKind> {
        match (prediction, label) {
            (1, 0) => Some(ErrorKind::FalsePositive),
            (0, 1) => Some(ErrorKind::FalseNegative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Critique {
    pub note_id: String,
    pub error_kind: ErrorKind,
    pub text: String,
    pub actionable: bool,
}

/// Which metric a synthesis step is trying to raise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Sensitivity,
    Specificity,
}

impl Direction {
    /// Sensitivity is raised by fixing false negatives, specificity by fixing false positives.
    pub fn error_kind(self) -> ErrorKind {
        match self {
            Direction::Sensitivity => ErrorKind::FalseNegative,
            Direction::Specificity => ErrorKind::FalsePositive,
        }
    }

    pub fn flipped(self) -> Direction {
        match self {
            Direction::Sensitivity => Direction::Specificity,
            Direction::Specificity => Direction::Sensitivity,
        }
    }

    fn improver(self) -> Role {
        match self {
            Direction::Sensitivity => Role::SensitivityImprover,
            Direction::Specificity => Role::SpecificityImprover,
        }
    }

    fn summarizer(self) -> Role {
        match self {
            Direction::Sensitivity => Role::SensitivitySummarizer,
            Direction::Specificity => Role::SpecificitySummarizer,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Sensitivity => "sensitivity",
            Direction::Specificity => "specificity",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectiveKind {
    SwitchTargetMetric,
    RewriteStrategy,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidanceDirective {
    pub kind: DirectiveKind,
    pub text: String,
    /// Iteration whose prompt the directive shapes.
    pub triggered_at: usize,
}

/// One line of development history shown to the guiding agent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryEntry {
    pub iteration: usize,
    pub metrics: Metrics,
    pub target: Option<Direction>,
}

fn fmt_rate(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.3}"))
}

/// Critique block as it appears in summarizer requests: one `- [note_id] text` line each.
pub fn format_critiques(critiques: &[Critique]) -> String {
    critiques
        .iter()
        .map(|c| format!("- [{}] {}\n", c.note_id, c.text.split_whitespace().collect::<Vec<_>>().join(" ")))
        .collect()
}

pub fn failed_prompt_block(failed: &Prompt) -> String {
    format!(
        "\nA previous revision of these criteria lowered performance. Do not repeat its changes:\n<failed_prompt>\n{}\n</failed_prompt>\n",
        failed.text
    )
}

pub fn guidance_block(guidance: &GuidanceDirective) -> String {
    format!("\nSupervisor guidance:\n<guidance>\n{}\n</guidance>\n", guidance.text)
}

/// Agent calls bound to one backend and template set.
pub struct Agents<'a> {
    backend: &'a dyn Backend,
    templates: &'a Templates,
    temperature: f64,
    max_tokens: u32,
}

impl<'a> Agents<'a> {
    pub fn new(backend: &'a dyn Backend, templates: &'a Templates) -> Self {
        Self {
            backend,
            templates,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }

    pub fn with_generation(mut self, temperature: f64, max_tokens: u32) -> Self {
        assert!(temperature >= 0.0 && max_tokens >= 1);
        self.temperature = temperature;
        self.max_tokens = max_tokens;
        self
    }

    pub fn backend(&self) -> &dyn Backend {
        self.backend
    }

    fn request(&self, role: Role, vars: &[(&str, &str)]) -> ModelRequest {
        let (system_text, user_text) = self.templates.render(role, vars);
        ModelRequest {
            system_text,
            user_text,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
        }
    }

    fn call(&self, request: &ModelRequest) -> Result<String, AgentError> {
        Ok(self.backend.complete(request)?.text)
    }

    /// Specialist call with one clarification retry; never fails on parsing.
    pub fn classify(&self, prompt: &Prompt, sop: &Sop, note: &Note) -> Result<Prediction, AgentError> {
        let mut request = self.request(
            Role::Specialist,
            &[("sop", sop.text()), ("prompt", &prompt.text), ("note", &note.text)],
        );
        let first = self.call(&request)?;
        let (label, parse_status, raw_text) = match parse_answer(&first) {
            AnswerParse::Clean(l) => (l, ParseStatus::Clean, first),
            AnswerParse::Normalized(l) => (l, ParseStatus::Normalized, first),
            AnswerParse::Ambiguous => {
                request.user_text.push_str(CLARIFICATION);
                let second = self.call(&request)?;
                match parse_answer(&second) {
                    AnswerParse::Clean(l) | AnswerParse::Normalized(l) => (l, ParseStatus::Retried, second),
                    AnswerParse::Ambiguous => (0, ParseStatus::Defaulted, second),
                }
            }
        };
        Ok(Prediction {
            note_id: note.id.clone(),
            label,
            raw_text,
            parse_status,
        })
    }

    pub fn critique(&self, kind: ErrorKind, prompt: &Prompt, sop: &Sop, note: &Note) -> Result<Critique, AgentError> {
        let role = match kind {
            ErrorKind::FalsePositive => Direction::Specificity.improver(),
            ErrorKind::FalseNegative => Direction::Sensitivity.improver(),
        };
        let request = self.request(role, &[("sop", sop.text()), ("prompt", &prompt.text), ("note", &note.text)]);
        let raw = self.call(&request)?;
        let text = raw.trim().to_string();
        let actionable = !text.is_empty() && !text.lines().any(|l| l.trim() == NON_ACTIONABLE_MARKER);
        Ok(Critique {
            note_id: note.id.clone(),
            error_kind: kind,
            text,
            actionable,
        })
    }

    pub fn critique_false_positive(&self, prompt: &Prompt, sop: &Sop, note: &Note) -> Result<Critique, AgentError> {
        self.critique(ErrorKind::FalsePositive, prompt, sop, note)
    }

    pub fn critique_false_negative(&self, prompt: &Prompt, sop: &Sop, note: &Note) -> Result<Critique, AgentError> {
        self.critique(ErrorKind::FalseNegative, prompt, sop, note)
    }

    /// Summarizer call. With `failed_example` set this is a revert synthesis:
    /// the failed prompt is shown as something not to repeat.
    ///
    /// The new prompt's iteration is one past `failed_example` when present,
    /// otherwise one past `base`.
    pub fn synthesize(
        &self,
        critiques: &[Critique],
        base: &Prompt,
        sop: &Sop,
        direction: Direction,
        failed_example: Option<&Prompt>,
        guidance: Option<&GuidanceDirective>,
    ) -> Result<Prompt, AgentError> {
        if critiques.is_empty() {
            return Err(AgentError::NothingToSynthesize);
        }
        if let Some(c) = critiques
            .iter()
            .find(|c| !c.actionable || c.error_kind != direction.error_kind())
        {
            return Err(AgentError::Precondition(format!(
                "critique for {} is not an actionable {:?} critique",
                c.note_id,
                direction.error_kind()
            )));
        }
        let critique_block = format_critiques(critiques);
        let failed_block = failed_example.map(failed_prompt_block).unwrap_or_default();
        let guidance_text = guidance.map(guidance_block).unwrap_or_default();
        let request = self.request(
            direction.summarizer(),
            &[
                ("sop", sop.text()),
                ("prompt", &base.text),
                ("critiques", &critique_block),
                ("failed_prompt", &failed_block),
                ("guidance", &guidance_text),
            ],
        );
        let text = self.call(&request)?.trim().to_string();
        if text.is_empty() {
            return Err(AgentError::EmptyResponse(direction.summarizer()));
        }
        let iteration = failed_example.map_or(base.iteration, |f| f.iteration) + 1;
        let origin = match (failed_example, direction) {
            (Some(_), _) => PromptOrigin::RevertSynthesis,
            (None, Direction::Sensitivity) => PromptOrigin::SensitivitySynthesis,
            (None, Direction::Specificity) => PromptOrigin::SpecificitySynthesis,
        };
        Ok(Prompt {
            id: prompt_id(iteration),
            iteration,
            text,
            origin,
            parent_id: Some(base.id.clone()),
        })
    }

    /// Guiding call. Requires at least two iterations with the last one not
    /// improving F1 over the one before it.
    pub fn guide(&self, history: &[HistoryEntry], current: &Prompt, sop: &Sop) -> Result<GuidanceDirective, AgentError> {
        let stalled = match history {
            [.., prev, last] => last.metrics.f1 <= prev.metrics.f1,
            _ => false,
        };
        if !stalled {
            return Err(AgentError::Precondition(
                "guidance requires two iterations with non-improving F1".into(),
            ));
        }
        let lines: String = history
            .iter()
            .map(|h| {
                format!(
                    "t={} sensitivity={} specificity={} f1={:.3} target={}\n",
                    h.iteration,
                    fmt_rate(h.metrics.sensitivity),
                    fmt_rate(h.metrics.specificity),
                    h.metrics.f1,
                    h.target.map_or("none".to_string(), |d| d.to_string())
                )
            })
            .collect();
        let request = self.request(
            Role::Guiding,
            &[("sop", sop.text()), ("prompt", &current.text), ("history", &lines)],
        );
        let raw = self.call(&request)?;
        let (kind, text) = parse_directive(&raw).ok_or(AgentError::EmptyResponse(Role::Guiding))?;
        Ok(GuidanceDirective {
            kind,
            text,
            triggered_at: history.len(),
        })
    }
}

#[cfg(test)]
mod tests;
