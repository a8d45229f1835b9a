use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::SimError;
use crate::agents::Direction;
use crate::dataset::{generate_with_counts, positive_count, Corpus, CueKind, Split, TermModel};

/// Line prefix carrying the decision boundary inside simulated prompts.
pub const BOUNDARY_TAG: &str = "sim-boundary:";

/// Tunable dynamics of the simulated model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimParams {
    pub term: String,
    /// Distance between the positive and negative latent score means.
    pub separation: f64,
    /// Boundary step per unit of critique mass (errors / class size).
    pub step_gain: f64,
    /// Noise magnitude; divided by the size of the class being corrected.
    pub noise_scale: f64,
    /// Step multiplier applied when a guiding directive is attached.
    pub guidance_gain: f64,
    /// Fraction of critiques answered with the non-actionable marker.
    pub non_actionable_rate: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        Self {
            term: "brain fog".into(),
            separation: 1.25,
            step_gain: 3.0,
            noise_scale: 32.0,
            guidance_gain: 1.5,
            non_actionable_rate: 0.05,
        }
    }
}

impl SimParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidParams(what.to_string()));
        if self.separation.is_nan() || self.separation <= 0.0 {
            return bad("separation must be > 0");
        }
        if self.step_gain.is_nan() || self.step_gain <= 0.0 {
            return bad("step_gain must be > 0");
        }
        if self.noise_scale.is_nan() || self.noise_scale < 0.0 {
            return bad("noise_scale must be >= 0");
        }
        if self.guidance_gain.is_nan() || self.guidance_gain <= 0.0 {
            return bad("guidance_gain must be > 0");
        }
        if !(0.0..=1.0).contains(&self.non_actionable_rate) {
            return bad("non_actionable_rate must lie in [0, 1]");
        }
        if self.term.trim().is_empty() {
            return bad("term must not be empty");
        }
        Ok(())
    }
}

/// What the simulator knows about one note.
#[derive(Debug, Clone, PartialEq)]
pub struct NoteFacts {
    pub id: String,
    pub label: u8,
    pub split: Split,
    pub score: f64,
    pub cue: String,
    pub cue_kind: CueKind,
    pub family: Option<String>,
}

/// Deterministic stand-in for both the corpus and the model.
///
/// Every note gets a latent score (negatives centred on 0, positives on
/// `separation`, unit variance). A prompt's behaviour is a single decision
/// boundary: the simulated specialist answers yes iff `score >= boundary`.
/// Synthesized prompts carry their boundary on a `sim-boundary:` line, so
/// every simulated response is a pure function of the world and the request.
#[derive(Debug, Clone)]
pub struct SimWorld {
    pub n: usize,
    pub prevalence: f64,
    pub seed: u64,
    pub params: SimParams,
    /// Boundary of any prompt without a boundary line (the initial prompt).
    pub boundary: f64,
    dev: Corpus,
    val: Corpus,
    facts: HashMap<String, NoteFacts>,
}

/// First 8 bytes of SHA-256 over the length-prefixed parts.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Uniform in [0, 1) from a hash.
pub fn unit_from_hash(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}

pub fn build_world(n: usize, prevalence: f64, seed: u64, params: SimParams) -> Result<SimWorld, SimError> {
    params.validate()?;
    if !(prevalence > 0.0 && prevalence < 1.0) {
        return Err(SimError::InvalidParams(format!("prevalence {prevalence} must lie in (0, 1)")));
    }
    if n < 4 {
        return Err(SimError::InvalidParams("n must be at least 4".into()));
    }
    let positives = positive_count(n, prevalence)?;
    let dev_n = n.div_ceil(2);
    let val_n = n - dev_n;
    let dev_pos = positives.div_ceil(2);
    let val_pos = positives - dev_pos;
    if dev_pos == 0 || val_pos == 0 || dev_pos >= dev_n || val_pos >= val_n {
        return Err(SimError::InvalidParams(format!(
            "{positives} positives cannot be split across dev ({dev_n}) and val ({val_n})"
        )));
    }

    let model = TermModel::for_term(&params.term);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_5c0e);
    let mut facts = HashMap::with_capacity(n);
    let mut corpora = Vec::with_capacity(2);
    for (split, count, pos, salt) in [(Split::Dev, dev_n, dev_pos, 1u64), (Split::Val, val_n, val_pos, 2u64)] {
        let planted = generate_with_counts(&split.to_string(), count, pos, &model, seed.wrapping_mul(31).wrapping_add(salt));
        let mut notes = Vec::with_capacity(count);
        for p in planted {
            let z: f64 = StandardNormal.sample(&mut rng);
            let score = z + if p.note.label == 1 { params.separation } else { 0.0 };
            facts.insert(
                p.note.text.clone(),
                NoteFacts {
                    id: p.note.id.clone(),
                    label: p.note.label,
                    split,
                    score,
                    cue: p.cue,
                    cue_kind: p.cue_kind,
                    family: p.family,
                },
            );
            notes.push(p.note);
        }
        corpora.push(Corpus::new(format!("sim-{seed}-{split}"), split, notes)?);
    }
    let val = corpora.pop().expect("val corpus");
    let dev = corpora.pop().expect("dev corpus");
    Ok(SimWorld {
        n,
        prevalence,
        seed,
        boundary: params.separation / 2.0,
        params,
        dev,
        val,
        facts,
    })
}

impl SimWorld {
    pub fn dev(&self) -> &Corpus {
        &self.dev
    }

    pub fn val(&self) -> &Corpus {
        &self.val
    }

    pub fn facts(&self, note_text: &str) -> Option<&NoteFacts> {
        self.facts.get(note_text)
    }

    /// Latent scores in corpus order for the split.
    pub fn scores(&self, split: Split) -> Vec<f64> {
        let corpus = match split {
            Split::Dev => &self.dev,
            Split::Val => &self.val,
        };
        corpus.notes().iter().map(|n| self.facts[&n.text].score).collect()
    }

    /// Boundary encoded in a prompt, or the initial boundary if none.
    pub fn boundary_of(&self, prompt_text: &str) -> f64 {
        parse_boundary(prompt_text).unwrap_or(self.boundary)
    }

    /// Size of the dev class whose errors a synthesis in `direction` corrects.
    pub fn class_count(&self, direction: Direction) -> usize {
        match direction {
            Direction::Sensitivity => self.dev.positives(),
            Direction::Specificity => self.dev.negatives(),
        }
    }

    /// One synthesis move of the boundary.
    ///
    /// Sensitivity lowers the boundary and specificity raises it by
    /// `step_gain * error_count / class_count`; seeded Gaussian noise with
    /// standard deviation `noise_scale / class_count` is added either way,
    /// so small classes take large, erratic steps.
    pub fn apply_synthesis_step(
        &self,
        from: f64,
        direction: Direction,
        error_count: usize,
        class_count: usize,
        salt: u64,
    ) -> f64 {
        assert!(class_count >= 1, "class_count must be at least 1");
        let drift = self.params.step_gain * error_count as f64 / class_count as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(&[&self.seed.to_le_bytes(), &salt.to_le_bytes()]));
        let z: f64 = StandardNormal.sample(&mut rng);
        let noise = self.params.noise_scale / class_count as f64 * z;
        match direction {
            Direction::Sensitivity => from - drift + noise,
            Direction::Specificity => from + drift + noise,
        }
    }
}

pub fn parse_boundary(text: &str) -> Option<f64> {
    text.lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix(BOUNDARY_TAG))
        .and_then(|v| v.trim().parse().ok())
}
