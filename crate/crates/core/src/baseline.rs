//! Keyword-lexicon baseline: a note is positive when any term appears in it.
//!
//! Matching is case-insensitive, whitespace-normalized and delimited by word
//! boundaries, so "sob" does not match "sobbing". There is deliberately no
//! negation handling.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::dataset::{Corpus, Note};
use crate::metrics::{score, Metrics};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon {0:?} has no terms")]
    Empty(String),
    #[error("failed to read lexicon {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    name: String,
    terms: Vec<String>,
}

fn normalize(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl Lexicon {
    /// Drops blank terms and case-insensitive duplicates, keeping first occurrences.
    pub fn new<I, S>(name: impl Into<String>, terms: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let name = name.into();
        let mut seen = HashSet::new();
        let terms: Vec<String> = terms
            .into_iter()
            .map(|t| normalize(t.as_ref()))
            .filter(|t| !t.is_empty() && seen.insert(t.clone()))
            .collect();
        if terms.is_empty() {
            return Err(LexiconError::Empty(name));
        }
        Ok(Self { name, terms })
    }

    /// Parses the plain-text format: one term per line, `#` starts a comment line.
    pub fn parse(name: impl Into<String>, contents: &str) -> Result<Self, LexiconError> {
        Self::new(
            name,
            contents
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#')),
        )
    }

    pub fn load(path: &Path) -> Result<Self, LexiconError> {
        let contents = fs::read_to_string(path).map_err(|source| LexiconError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(name, &contents)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Whole-word occurrence of `term` in `text`; both already normalized.
fn contains_word(text: &str, term: &str) -> bool {
    let mut from = 0;
    while let Some(pos) = text[from..].find(term) {
        let start = from + pos;
        let end = start + term.len();
        let before_ok = text[..start].chars().next_back().is_none_or(|c| !is_word_char(c));
        let after_ok = text[end..].chars().next().is_none_or(|c| !is_word_char(c));
        if before_ok && after_ok {
            return true;
        }
        from = start + text[start..].chars().next().map_or(1, char::len_utf8);
    }
    false
}

pub fn lexicon_classify(lexicon: &Lexicon, note: &Note) -> u8 {
    let text = normalize(&note.text);
    u8::from(lexicon.terms.iter().any(|t| contains_word(&text, t)))
}

pub fn lexicon_predictions(lexicon: &Lexicon, corpus: &Corpus) -> Vec<u8> {
    corpus.notes().iter().map(|n| lexicon_classify(lexicon, n)).collect()
}

pub fn lexicon_evaluate(lexicon: &Lexicon, corpus: &Corpus) -> Metrics {
    score(&lexicon_predictions(lexicon, corpus), &corpus.labels()).expect("corpus is non-empty and binary")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic_corpus, Split, TermModel};

    fn note(text: &str) -> Note {
        Note {
            id: "n".into(),
            text: text.into(),
            label: 0,
        }
    }

    #[test]
    fn matches_whole_words_only() {
        let lex = Lexicon::new("t", ["chest pain"]).unwrap();
        assert_eq!(lexicon_classify(&lex, &note("Patient reports chest pain today.")), 1);
        assert_eq!(lexicon_classify(&lex, &note("no cardiac complaints")), 0);
        assert_eq!(lexicon_classify(&lex, &note("CHEST\n  PAIN on exertion")), 1);
        let sob = Lexicon::new("t", ["SOB"]).unwrap();
        assert_eq!(lexicon_classify(&sob, &note("Patient was sobbing")), 0);
        assert_eq!(lexicon_classify(&sob, &note("sobbing, then SOB.")), 1);
    }

    #[test]
    fn dedupes_and_parses_comments() {
        let lex = Lexicon::parse("t", "# header\nChest Pain\nchest  pain\n\nangina\n").unwrap();
        assert_eq!(lex.terms(), ["chest pain", "angina"]);
        assert!(matches!(Lexicon::parse("e", "# only comments\n\n"), Err(LexiconError::Empty(_))));
    }

    #[test]
    fn planted_phrasings_separate_classes_exactly() {
        let model = TermModel::for_term("chest pain");
        let corpus = generate_synthetic_corpus(200, 0.12, &model, 11).unwrap();
        let lex = Lexicon::new("planted", model.positive_phrasings()).unwrap();
        let m = lexicon_evaluate(&lex, &corpus);
        assert_eq!((m.sensitivity, m.specificity), (Some(1.0), Some(1.0)));
    }

    #[test]
    fn empty_match_lexicon_is_constant_negative() {
        let corpus = generate_synthetic_corpus(200, 0.03, &TermModel::for_term("brain fog"), 1).unwrap();
        let lex = Lexicon::new("none", ["xyzzy"]).unwrap();
        let m = lexicon_evaluate(&lex, &corpus);
        assert_eq!(m.sensitivity, Some(0.0));
        assert_eq!(m.accuracy, 0.97);
    }

    #[test]
    fn match_everything_lexicon() {
        let corpus = generate_synthetic_corpus(200, 0.03, &TermModel::for_term("brain fog"), 1)
            .unwrap()
            .with_split(Split::Val);
        // Every synthetic note opens with "Visit".
        let lex = Lexicon::new("all", ["visit"]).unwrap();
        let m = lexicon_evaluate(&lex, &corpus);
        assert_eq!((m.sensitivity, m.specificity), (Some(1.0), Some(0.0)));
        assert!((m.f1 - 0.058).abs() < 0.001);
    }

    proptest::proptest! {
        #[test]
        fn adding_terms_never_removes_positives(
            words in proptest::collection::vec("[a-z]{1,6}", 1..5),
            extra in "[a-z]{1,6}",
            text in "[a-z ]{0,60}",
        ) {
            let small = Lexicon::new("s", &words).unwrap();
            let mut more = words.clone();
            more.push(extra);
            let large = Lexicon::new("l", &more).unwrap();
            let n = note(if text.trim().is_empty() { "x" } else { &text });
            proptest::prop_assert!(lexicon_classify(&large, &n) >= lexicon_classify(&small, &n));
        }
    }
}
