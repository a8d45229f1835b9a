use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Corpus, DatasetError, Note, Split};

/// How symptom mentions are planted into synthetic notes.
///
/// Positive notes carry one phrasing drawn from one paraphrase family.
/// Negative notes carry either a hedged (negated) mention of the symptom or
/// an unrelated distractor finding. No positive phrasing may occur inside a
/// negative phrasing or filler, so a lexicon built from the phrasings
/// separates the classes exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermModel {
    pub term: String,
    pub families: Vec<PhraseFamily>,
    pub hedged_negatives: Vec<String>,
    pub distractors: Vec<String>,
    /// Probability that a negative note carries a hedged mention.
    pub hedged_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseFamily {
    pub name: String,
    pub phrasings: Vec<String>,
}

impl PhraseFamily {
    fn new(name: &str, phrasings: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            phrasings: phrasings.iter().map(|s| s.to_string()).collect(),
        }
    }
}

const DISTRACTORS: &[&str] = &[
    "mild knee pain after gardening",
    "seasonal allergic rhinitis",
    "a healing abrasion on the left forearm",
    "intermittent lower back stiffness",
    "a request for a medication refill",
    "follow-up of well-controlled hypothyroidism",
    "a rash on the dorsum of the hand",
    "occasional heartburn after large meals",
];

const FILLERS: &[&str] = &[
    "Vital signs reviewed and within normal limits.",
    "Medications reconciled with the patient.",
    "Patient seen for routine follow-up.",
    "Social history unchanged since last visit.",
    "Labs from last month were reviewed.",
    "Plan discussed and patient agrees.",
    "Return to clinic in three months.",
    "No recent travel reported.",
];

impl TermModel {
    /// A built-in planting model for a few symptoms; any other term gets a
    /// generic model derived from the term itself.
    pub fn for_term(term: &str) -> Self {
        let t = term.trim().to_lowercase();
        let (families, hedged): (Vec<PhraseFamily>, Vec<String>) = match t.as_str() {
            "brain fog" => (
                vec![
                    PhraseFamily::new("cognitive slowing", &["trouble thinking clearly", "thinking feels slowed down"]),
                    PhraseFamily::new("memory lapses", &["forgetting appointments lately", "short-term memory lapses"]),
                    PhraseFamily::new("concentration", &["difficulty concentrating at work", "unable to focus for long"]),
                    PhraseFamily::new("mental cloudiness", &["feels mentally cloudy", "head feels foggy since the infection"]),
                ],
                vec!["denies brain fog".into(), "no cognitive complaints".into(), "denies memory problems".into()],
            ),
            "chest pain" => (
                vec![
                    PhraseFamily::new("radiating pain", &["chest pain radiating to the left arm", "pain spreading from the chest to the jaw"]),
                    PhraseFamily::new("pressure", &["substernal chest pressure", "heaviness over the sternum"]),
                    PhraseFamily::new("tightness", &["chest tightness on exertion", "tight feeling across the chest"]),
                    PhraseFamily::new("pleuritic", &["sharp pain with deep breaths", "stabbing pain in the chest wall"]),
                ],
                vec!["denies chest pain".into(), "no chest discomfort".into(), "chest pain resolved years ago".into()],
            ),
            "shortness of breath" | "sob" => (
                vec![
                    PhraseFamily::new("exertional dyspnea", &["winded after one flight of stairs", "dyspnea on exertion"]),
                    PhraseFamily::new("orthopnea", &["needs three pillows to breathe at night", "breathless when lying flat"]),
                    PhraseFamily::new("air hunger", &["cannot catch her breath", "feels starved for air"]),
                ],
                vec!["denies shortness of breath".into(), "breathing comfortably on room air".into(), "no dyspnea".into()],
            ),
            _ => (
                vec![
                    PhraseFamily::new("direct report", &[&format!("reports ongoing {t}"), &format!("new onset of {t}")]),
                    PhraseFamily::new("worsening", &[&format!("worsening {t} this week"), &format!("{t} getting worse")]),
                    PhraseFamily::new("functional impact", &[&format!("{t} limiting daily activities")]),
                ],
                vec![format!("denies {t}"), format!("no history of {t}")],
            ),
        };
        Self {
            term: term.trim().to_string(),
            families,
            hedged_negatives: hedged,
            distractors: DISTRACTORS.iter().map(|s| s.to_string()).collect(),
            hedged_rate: 0.35,
        }
    }

    /// Every planted positive phrasing, in family order.
    pub fn positive_phrasings(&self) -> Vec<&str> {
        self.families
            .iter()
            .flat_map(|f| f.phrasings.iter().map(String::as_str))
            .collect()
    }
}

/// What was planted into a note.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    Positive,
    Hedged,
    Distractor,
}

/// A generated note together with the cue planted into it.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedNote {
    pub note: Note,
    pub cue: String,
    pub cue_kind: CueKind,
    /// Paraphrase family for positive notes.
    pub family: Option<String>,
}

/// Positive count for `n` notes at prevalence `p`: `floor(n*p + 0.5)`.
///
/// Errors when the count is zero or leaves no negative notes.
pub fn positive_count(n: usize, prevalence: f64) -> Result<usize, DatasetError> {
    let infeasible = |reason| DatasetError::InfeasiblePrevalence { n, prevalence, reason };
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(infeasible("prevalence must lie strictly between 0 and 1"));
    }
    let count = (n as f64 * prevalence + 0.5).floor() as usize;
    if count < 1 {
        return Err(infeasible("rounds to zero positive notes"));
    }
    if count >= n {
        return Err(infeasible("leaves no negative notes"));
    }
    Ok(count)
}

/// Generates `n` notes with exactly `positives` positive labels.
pub fn generate_with_counts(
    name: &str,
    n: usize,
    positives: usize,
    model: &TermModel,
    seed: u64,
) -> Vec<PlantedNote> {
    assert!(positives <= n, "positives exceed corpus size");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels = vec![0u8; n];
    labels[..positives].fill(1);
    labels.shuffle(&mut rng);

    labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| {
            let (cue, cue_kind, family) = if label == 1 {
                let fam = model.families.choose(&mut rng).expect("term model has families");
                let phr = fam.phrasings.choose(&mut rng).expect("family has phrasings");
                (phr.clone(), CueKind::Positive, Some(fam.name.clone()))
            } else if !model.hedged_negatives.is_empty() && rng.random_bool(model.hedged_rate) {
                (model.hedged_negatives.choose(&mut rng).unwrap().clone(), CueKind::Hedged, None)
            } else {
                (model.distractors.choose(&mut rng).unwrap().clone(), CueKind::Distractor, None)
            };
            let opener = FILLERS.choose(&mut rng).unwrap();
            let closer = FILLERS.choose(&mut rng).unwrap();
            let frame = match cue_kind {
                CueKind::Positive => ["Patient reports", "On review of systems,", "She describes", "He endorses"],
                CueKind::Hedged => ["On review of systems:", "Patient states", "Per patient,", "Today:"],
                CueKind::Distractor => ["Presents with", "Chief concern:", "Seen today for", "Notable for"],
            }
            .choose(&mut rng)
            .copied()
            .unwrap();
            let id = format!("{name}-{i:04}");
            let text = format!("Visit {id}. {opener} {frame} {cue}. {closer}");
            PlantedNote {
                note: Note { id, text, label },
                cue,
                cue_kind,
                family,
            }
        })
        .collect()
}

/// Deterministic synthetic corpus with exactly `round(n*prevalence)` positives.
pub fn generate_synthetic_corpus(
    n: usize,
    prevalence: f64,
    model: &TermModel,
    seed: u64,
) -> Result<Corpus, DatasetError> {
    let positives = positive_count(n, prevalence)?;
    let name = format!("synth-{}", seed);
    let notes = generate_with_counts(&name, n, positives, model, seed)
        .into_iter()
        .map(|p| p.note)
        .collect();
    Corpus::new(name, Split::Dev, notes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::prevalence;

    /// Smallest k with k - 0.5 <= x, i.e. the half-up rounding of x, found by counting.
    fn brute_force_round(x: f64) -> usize {
        let mut k = 0usize;
        while (k as f64) + 0.5 <= x {
            k += 1;
        }
        k
    }

    #[test]
    fn three_percent_of_two_hundred_is_six() {
        let c = generate_synthetic_corpus(200, 0.03, &TermModel::for_term("brain fog"), 7).unwrap();
        assert_eq!(c.positives(), 6);
        assert_eq!(c.len(), 200);
    }

    #[test]
    fn deterministic_for_seed() {
        let m = TermModel::for_term("chest pain");
        let a = generate_synthetic_corpus(200, 0.12, &m, 7).unwrap();
        let b = generate_synthetic_corpus(200, 0.12, &m, 7).unwrap();
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        let c = generate_synthetic_corpus(200, 0.12, &m, 8).unwrap();
        assert_ne!(a.to_jsonl(), c.to_jsonl());
    }

    #[test]
    fn rounding_rule_matches_brute_force() {
        // n=100, p=0.005 -> 0.5 rounds up to one positive; n=50 gives 0.25 -> error.
        assert_eq!(positive_count(100, 0.005).unwrap(), 1);
        assert!(positive_count(50, 0.005).is_err());
        for n in [10usize, 37, 50, 100, 200, 400] {
            for step in 1..100 {
                let p = step as f64 / 100.0;
                let expected = brute_force_round(n as f64 * p);
                match positive_count(n, p) {
                    Ok(k) => assert_eq!(k, expected, "n={n} p={p}"),
                    Err(_) => assert!(expected == 0 || expected >= n, "n={n} p={p}"),
                }
            }
        }
    }

    #[test]
    fn invalid_prevalence_rejected() {
        assert!(positive_count(100, 0.0).is_err());
        assert!(positive_count(100, 1.0).is_err());
        assert!(positive_count(100, 1.5).is_err());
    }

    #[test]
    fn phrasings_never_occur_in_negatives() {
        for term in ["brain fog", "chest pain", "shortness of breath", "fatigue"] {
            let m = TermModel::for_term(term);
            for phr in m.positive_phrasings() {
                for neg in m.hedged_negatives.iter().chain(&m.distractors) {
                    assert!(!neg.contains(phr), "{phr:?} inside {neg:?}");
                }
                for filler in FILLERS {
                    assert!(!filler.to_lowercase().contains(phr));
                }
            }
            assert!((3..=5).contains(&m.families.len()));
        }
    }

    #[test]
    fn planted_cues_are_in_text() {
        let notes = generate_with_counts("x", 50, 10, &TermModel::for_term("brain fog"), 3);
        assert_eq!(notes.iter().filter(|p| p.note.label == 1).count(), 10);
        for p in &notes {
            assert!(p.note.text.contains(&p.cue));
            assert_eq!(p.cue_kind == CueKind::Positive, p.note.label == 1);
            assert_eq!(p.family.is_some(), p.note.label == 1);
        }
    }

    proptest::proptest! {
        #[test]
        fn prevalence_is_rounded_count_over_n(n in 2usize..400, p in 0.01f64..0.99, seed in 0u64..1000) {
            let m = TermModel::for_term("cough");
            if let Ok(c) = generate_synthetic_corpus(n, p, &m, seed) {
                let k = (n as f64 * p + 0.5).floor();
                proptest::prop_assert_eq!(prevalence(&c), k / n as f64);
            }
        }
    }
}
