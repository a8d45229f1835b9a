//! Labeled note corpora: JSONL loading, prevalence, and synthetic generation.

mod synth;

pub use synth::{
    generate_synthetic_corpus, generate_with_counts, positive_count, CueKind, PhraseFamily, PlantedNote, TermModel,
};

use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: duplicate note id {id:?}")]
    DuplicateId { line: usize, id: String },
    #[error("empty corpus")]
    Empty,
    #[error("infeasible prevalence {prevalence} for n={n}: {reason}")]
    InfeasiblePrevalence {
        n: usize,
        prevalence: f64,
        reason: &'static str,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Dev,
    Val,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Dev => f.write_str("dev"),
            Split::Val => f.write_str("val"),
        }
    }
}

/// A single labeled note.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub id: String,
    pub text: String,
    pub label: u8,
}

impl Note {
    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

/// An ordered, immutable collection of notes for one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    name: String,
    split: Split,
    notes: Vec<Note>,
}

impl Corpus {
    /// Validates ids, labels and texts. Order is preserved.
    pub fn new(name: impl Into<String>, split: Split, notes: Vec<Note>) -> Result<Self, DatasetError> {
        if notes.is_empty() {
            return Err(DatasetError::Empty);
        }
        let mut seen = HashSet::with_capacity(notes.len());
        for (i, note) in notes.iter().enumerate() {
            validate_note(note).map_err(|message| DatasetError::Malformed { line: i + 1, message })?;
            if !seen.insert(note.id.as_str()) {
                return Err(DatasetError::DuplicateId {
                    line: i + 1,
                    id: note.id.clone(),
                });
            }
        }
        Ok(Self {
            name: name.into(),
            split,
            notes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn with_split(mut self, split: Split) -> Self {
        self.split = split;
        self
    }

    pub fn notes(&self) -> &[Note] {
        &self.notes
    }

    pub fn len(&self) -> usize {
        self.notes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.notes.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.notes.iter().map(|n| n.label).collect()
    }

    pub fn positives(&self) -> usize {
        self.notes.iter().filter(|n| n.is_positive()).count()
    }

    pub fn negatives(&self) -> usize {
        self.len() - self.positives()
    }

    pub fn get(&self, id: &str) -> Option<&Note> {
        self.notes.iter().find(|n| n.id == id)
    }

    /// Serializes to the JSONL record format accepted by [`load_corpus`].
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for note in &self.notes {
            out.push_str(&serde_json::to_string(note).expect("note serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let io_err = |source| DatasetError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut file = fs::File::create(path).map_err(io_err)?;
        file.write_all(self.to_jsonl().as_bytes()).map_err(io_err)
    }
}

fn validate_note(note: &Note) -> Result<(), String> {
    if note.id.is_empty() {
        return Err("empty id".into());
    }
    if note.label > 1 {
        return Err(format!("label must be 0 or 1, got {}", note.label));
    }
    if note.text.trim().is_empty() {
        return Err(format!("note {:?} has empty text", note.id));
    }
    Ok(())
}

const KNOWN_KEYS: [&str; 3] = ["id", "text", "label"];

/// Parses JSONL text. `name` is used for the corpus name only.
pub fn parse_corpus(name: &str, contents: &str, split: Split) -> Result<Corpus, DatasetError> {
    let mut notes = Vec::new();
    for (i, line) in contents.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(line).map_err(|e| DatasetError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| DatasetError::Malformed {
            line: line_no,
            message: "record is not a JSON object".into(),
        })?;
        for key in obj.keys().filter(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            log::warn!("{name}:{line_no}: ignoring unknown key {key:?}");
        }
        let id = obj
            .get("id")
            .and_then(|v| v.as_str())
            .ok_or_else(|| DatasetError::Malformed {
                line: line_no,
                message: "missing string field \"id\"".into(),
            })?;
        let text = obj
            .get("text")
            .and_then(|v| v.as_str())
            .ok_or_else(|| DatasetError::Malformed {
                line: line_no,
                message: "missing string field \"text\"".into(),
            })?;
        let label = match obj.get("label").and_then(|v| v.as_u64()) {
            Some(l @ (0 | 1)) => l as u8,
            _ => {
                return Err(DatasetError::Malformed {
                    line: line_no,
                    message: "field \"label\" must be 0 or 1".into(),
                })
            }
        };
        let note = Note {
            id: id.to_string(),
            text: text.to_string(),
            label,
        };
        validate_note(&note).map_err(|message| DatasetError::Malformed { line: line_no, message })?;
        notes.push((line_no, note));
    }
    if notes.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut seen = HashSet::new();
    for (line, note) in &notes {
        if !seen.insert(note.id.as_str()) {
            return Err(DatasetError::DuplicateId {
                line: *line,
                id: note.id.clone(),
            });
        }
    }
    Corpus::new(name, split, notes.into_iter().map(|(_, n)| n).collect())
}

/// Loads a JSONL corpus file, preserving file order.
pub fn load_corpus(path: &Path, split: Split) -> Result<Corpus, DatasetError> {
    let contents = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_corpus(&name, &contents, split)
}

/// Fraction of positive labels.
pub fn prevalence(corpus: &Corpus) -> f64 {
    corpus.positives() as f64 / corpus.len() as f64
}
