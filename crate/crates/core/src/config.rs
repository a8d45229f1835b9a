//! TOML run configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. The only value read from the environment is the endpoint
//! credential, [`API_KEY_ENV`].

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::BackendConfig;
use crate::pipeline::{DegradationBaseline, RunOptions, SelectionStrategy, Thresholds};
use crate::simlab::{ExperimentParams, SimParams};

pub const API_KEY_ENV: &str = "PROMPTFORGE_API_KEY";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Syntax { path: String, message: String },
    #[error("{key}: {message}")]
    Invalid { key: &'static str, message: String },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Live,
    Sim,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Mode::Live),
            "sim" => Ok(Mode::Sim),
            other => Err(format!("unknown mode {other:?} (expected live or sim)")),
        }
    }
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Live => "live",
            Mode::Sim => "sim",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: Mode,
    /// Symptom term; also the iteration-0 prompt.
    pub symptom: String,
    /// Optional SOP file; the bundled SOP is used otherwise.
    pub sop: Option<PathBuf>,
    /// Optional directory of `<role>.system.txt` / `<role>.user.txt` overrides.
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    /// Run-artifact directory.
    pub out: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    /// Live mode: development corpus (JSONL).
    pub dev: Option<PathBuf>,
    /// Live mode: validation corpus (JSONL).
    pub val: Option<PathBuf>,
    /// Sim mode: notes across both splits.
    pub n: Option<usize>,
    /// Sim mode: positive fraction.
    pub prevalence: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackendSection {
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    pub retry_budget: u32,
    pub backoff_ms: u64,
    pub cache_dir: Option<PathBuf>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for BackendSection {
    fn default() -> Self {
        let b = BackendConfig::default();
        Self {
            endpoint: b.endpoint_url,
            model: b.model_name,
            timeout_secs: b.timeout.as_secs(),
            retry_budget: b.retry_budget,
            backoff_ms: b.backoff_base.as_millis() as u64,
            cache_dir: None,
            temperature: crate::gateway::DEFAULT_TEMPERATURE,
            max_tokens: crate::gateway::DEFAULT_MAX_TOKENS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeSection {
    pub t_max: usize,
    pub theta_sensitivity: f64,
    pub theta_specificity: f64,
    pub guiding_enabled: bool,
    pub selection_strategy: SelectionStrategy,
    pub degradation_prevention: bool,
    pub degradation_baseline: DegradationBaseline,
    pub parallelism: usize,
}

impl Default for OptimizeSection {
    fn default() -> Self {
        let o = RunOptions::default();
        let th = Thresholds::default();
        Self {
            t_max: o.t_max,
            theta_sensitivity: th.theta_sensitivity,
            theta_specificity: th.theta_specificity,
            guiding_enabled: o.guiding_enabled,
            selection_strategy: o.selection_strategy,
            degradation_prevention: o.degradation_prevention,
            degradation_baseline: o.degradation_baseline,
            parallelism: o.parallelism,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineSection {
    pub lexicon: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub separation: f64,
    pub step_gain: f64,
    pub noise_scale: f64,
    pub guidance_gain: f64,
    pub non_actionable_rate: f64,
}

impl Default for SimSection {
    fn default() -> Self {
        let p = SimParams::default();
        Self {
            separation: p.separation,
            step_gain: p.step_gain,
            noise_scale: p.noise_scale,
            guidance_gain: p.guidance_gain,
            non_actionable_rate: p.non_actionable_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub prevalences: Vec<f64>,
    pub seeds: usize,
    pub n: usize,
    pub degradation_prevention: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            prevalences: vec![0.03, 0.12, 0.23],
            seeds: 50,
            n: DEFAULT_SIM_NOTES,
            degradation_prevention: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub run: RunSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub backend: BackendSection,
    #[serde(default)]
    pub optimize: OptimizeSection,
    #[serde(default)]
    pub baseline: BaselineSection,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub simulate: SimulateSection,
}

pub const DEFAULT_SIM_NOTES: usize = 400;

#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Files { dev: PathBuf, val: PathBuf },
    Simulated { n: usize, prevalence: f64 },
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub t_max: Option<usize>,
    pub out: Option<PathBuf>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn check_prevalence(key: &'static str, p: f64) -> Result<(), ConfigError> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("prevalence {p} must lie strictly between 0 and 1")))
    }
}

impl Config {
    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Syntax {
            path: origin.to_string(),
            message: e.to_string(),
        })
    }

    /// Reads, resolves relative paths, applies overrides and validates.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut config = Self::parse(&text, &path.display().to_string())?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        config.apply(overrides);
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                *v = resolve(base, v);
            }
        };
        fix(&mut self.run.sop);
        fix(&mut self.run.templates);
        fix(&mut self.data.dev);
        fix(&mut self.data.val);
        fix(&mut self.backend.cache_dir);
        fix(&mut self.baseline.lexicon);
        self.run.out = resolve(base, &self.run.out);
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.mode {
            self.run.mode = m;
        }
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(t) = o.t_max {
            self.optimize.t_max = t;
        }
        if let Some(out) = &o.out {
            self.run.out = out.clone();
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.run.symptom.trim().is_empty() {
            return Err(invalid("run.symptom", "must not be empty"));
        }
        self.thresholds()?;
        if self.optimize.parallelism == 0 {
            return Err(invalid("optimize.parallelism", "must be at least 1"));
        }
        self.sim_params().validate().map_err(|e| invalid("sim", e.to_string()))?;
        if let Some(p) = self.data.prevalence {
            check_prevalence("data.prevalence", p)?;
        }
        for &p in &self.simulate.prevalences {
            check_prevalence("simulate.prevalences", p)?;
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Result<Thresholds, ConfigError> {
        Thresholds::new(self.optimize.theta_sensitivity, self.optimize.theta_specificity)
            .map_err(|e| invalid("optimize.theta_*", e.to_string()))
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            t_max: self.optimize.t_max,
            guiding_enabled: self.optimize.guiding_enabled,
            selection_strategy: self.optimize.selection_strategy,
            degradation_prevention: self.optimize.degradation_prevention,
            degradation_baseline: self.optimize.degradation_baseline,
            parallelism: self.optimize.parallelism,
        }
    }

    pub fn sim_params(&self) -> SimParams {
        SimParams {
            term: self.run.symptom.clone(),
            separation: self.sim.separation,
            step_gain: self.sim.step_gain,
            noise_scale: self.sim.noise_scale,
            guidance_gain: self.sim.guidance_gain,
            non_actionable_rate: self.sim.non_actionable_rate,
        }
    }

    /// Where the dev/val corpora come from, naming the missing key otherwise.
    pub fn corpus_source(&self) -> Result<CorpusSource, ConfigError> {
        match self.run.mode {
            Mode::Live => Ok(CorpusSource::Files {
                dev: self.data.dev.clone().ok_or_else(|| invalid("data.dev", "required in live mode"))?,
                val: self.data.val.clone().ok_or_else(|| invalid("data.val", "required in live mode"))?,
            }),
            Mode::Sim => Ok(CorpusSource::Simulated {
                n: self.data.n.unwrap_or(DEFAULT_SIM_NOTES),
                prevalence: self
                    .data
                    .prevalence
                    .ok_or_else(|| invalid("data.prevalence", "required in sim mode"))?,
            }),
        }
    }

    pub fn experiment_params(&self) -> Result<ExperimentParams, ConfigError> {
        Ok(ExperimentParams {
            n: self.simulate.n,
            sim: self.sim_params(),
            t_max: self.optimize.t_max,
            thresholds: self.thresholds()?,
            degradation_prevention: self.simulate.degradation_prevention,
            guiding_enabled: self.optimize.guiding_enabled,
            selection_strategy: self.optimize.selection_strategy,
            base_seed: self.run.seed,
        })
    }

    /// Live backend settings; the credential comes from [`API_KEY_ENV`].
    pub fn backend_config(&self, read_cache: bool) -> BackendConfig {
        BackendConfig {
            endpoint_url: self.backend.endpoint.clone(),
            model_name: self.backend.model.clone(),
            timeout: Duration::from_secs(self.backend.timeout_secs),
            retry_budget: self.backend.retry_budget,
            backoff_base: Duration::from_millis(self.backend.backoff_ms),
            cache_dir: self.backend.cache_dir.clone(),
            read_cache,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL_SIM: &str = r#"
[run]
mode = "sim"
symptom = "brain fog"
out = "runs/bf"

[data]
prevalence = 0.03
"#;

    #[test]
    fn defaults_fill_missing_sections() {
        let c = Config::parse(MINIMAL_SIM, "t").unwrap();
        c.validate().unwrap();
        assert_eq!(c.optimize.t_max, 7);
        assert_eq!(c.backend.temperature, 0.0);
        assert_eq!(c.backend.max_tokens, 2048);
        assert_eq!(c.simulate.prevalences, [0.03, 0.12, 0.23]);
        assert_eq!(c.sim_params(), SimParams::default());
        assert_eq!(
            c.corpus_source().unwrap(),
            CorpusSource::Simulated {
                n: 400,
                prevalence: 0.03
            }
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL_SIM}\n[optimize]\ntmax = 3\n");
        assert!(matches!(Config::parse(&text, "t"), Err(ConfigError::Syntax { .. })));
    }

    #[test]
    fn overrides_and_paths() {
        let mut c = Config::parse(MINIMAL_SIM, "t").unwrap();
        c.resolve_paths(Path::new("/cfg"));
        assert_eq!(c.run.out, PathBuf::from("/cfg/runs/bf"));
        c.apply(&Overrides {
            t_max: Some(3),
            seed: Some(9),
            ..Overrides::default()
        });
        assert_eq!((c.optimize.t_max, c.run.seed), (3, 9));
    }

    #[test]
    fn live_mode_names_missing_dataset_key() {
        let mut c = Config::parse(MINIMAL_SIM, "t").unwrap();
        c.run.mode = Mode::Live;
        c.validate().unwrap();
        let err = c.corpus_source().unwrap_err().to_string();
        assert!(err.starts_with("data.dev"), "{err}");
    }

    #[test]
    fn prevalence_bounds() {
        let mut c = Config::parse(MINIMAL_SIM, "t").unwrap();
        c.simulate.prevalences = vec![0.03, 1.5];
        assert!(c.validate().unwrap_err().to_string().contains("simulate.prevalences"));
    }
}
