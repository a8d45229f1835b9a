#![allow(dead_code)]

pub mod http;

use std::sync::atomic::{AtomicUsize, Ordering};

use promptforge::agents::Role;
use promptforge::dataset::{Corpus, Note, Split};
use promptforge::gateway::{FnBackend, GatewayError, ModelRequest};

pub fn between<'a>(text: &'a str, open: &str, close: &str) -> Option<&'a str> {
    let start = text.find(open)? + open.len();
    let end = start + text[start..].find(close)?;
    Some(text[start..end].trim())
}

pub fn role_of(req: &ModelRequest) -> Role {
    Role::from_system_text(&req.system_text).expect("role marker")
}

/// Prompt text shown to the specialist.
pub fn specialist_prompt(req: &ModelRequest) -> &str {
    between(&req.system_text, "<prompt>", "</prompt>").expect("prompt block")
}

pub fn note_text(req: &ModelRequest) -> &str {
    between(&req.user_text, "<note>", "</note>").expect("note block")
}

/// `pos` positives `p00..`, then `neg` negatives `n00..`; text equals id.
pub fn corpus(pos: usize, neg: usize) -> Corpus {
    let notes = (0..pos)
        .map(|i| Note {
            id: format!("p{i:02}"),
            text: format!("p{i:02}"),
            label: 1,
        })
        .chain((0..neg).map(|i| Note {
            id: format!("n{i:02}"),
            text: format!("n{i:02}"),
            label: 0,
        }))
        .collect();
    Corpus::new("scripted", Split::Dev, notes).unwrap()
}

/// Scripted model over prompts named `P0, P1, ...`.
///
/// Prompt `Pk` labels the first `schedule[k].0` positives and the first
/// `schedule[k].1` negatives as yes (the last entry repeats). Every summarizer
/// call returns the next unused prompt name.
pub struct Script {
    pub schedule: Vec<(usize, usize)>,
    pub critique: String,
    next_prompt: AtomicUsize,
}

impl Script {
    pub fn new(schedule: Vec<(usize, usize)>) -> Self {
        Self {
            schedule,
            critique: "Mention the missed phrasing explicitly.".into(),
            next_prompt: AtomicUsize::new(1),
        }
    }

    pub fn answer(&self, req: &ModelRequest) -> Result<String, GatewayError> {
        Ok(match role_of(req) {
            Role::Specialist => {
                let k: usize = specialist_prompt(req)[1..].parse().expect("prompt name");
                let (tp, fp) = self.schedule[k.min(self.schedule.len() - 1)];
                let note = note_text(req);
                let idx: usize = note[1..].parse().unwrap();
                let yes = if note.starts_with('p') { idx < tp } else { idx < fp };
                if yes { "yes" } else { "no" }.to_string()
            }
            Role::SensitivityImprover | Role::SpecificityImprover => self.critique.clone(),
            Role::SensitivitySummarizer | Role::SpecificitySummarizer => {
                format!("P{}", self.next_prompt.fetch_add(1, Ordering::SeqCst))
            }
            Role::Guiding => "DIRECTIVE: rewrite_strategy\nGUIDANCE: try something else".to_string(),
        })
    }
}

pub fn scripted_backend(script: Script) -> FnBackend<impl Fn(&ModelRequest) -> Result<String, GatewayError> + Send + Sync> {
    FnBackend::new(move |req: &ModelRequest| script.answer(req))
}
