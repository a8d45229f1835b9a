//! Command-line entry point.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 backend
//! transport failure, 1 anything else.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::agents::{AgentError, Prompt, Sop, Templates};
use crate::baseline::{lexicon_evaluate, Lexicon, LexiconError};
use crate::config::{Config, ConfigError, CorpusSource, Mode, Overrides};
use crate::dataset::{load_corpus, prevalence, Corpus, DatasetError, Split};
use crate::gateway::{Backend, GatewayError, LiveBackend, SimBackend};
use crate::metrics::Metrics;
use crate::pipeline::artifacts::{
    self, ArtifactError, BaselineArtifact, RunManifest, BASELINE_FILE, TRAJECTORY_FILE, VALIDATION_FILE,
};
use crate::pipeline::{Optimizer, PipelineError, Trajectory};
use crate::reporting::{self, comparison_csv, comparison_row, format_percent, ReportError};
use crate::simlab::{build_world, run_instability_experiment, SimError, SimWorld};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_TRANSPORT: u8 = 3;

pub const DEV_CORPUS_FILE: &str = "dev.jsonl";
pub const VAL_CORPUS_FILE: &str = "val.jsonl";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Parser)]
#[command(name = "promptforge", version, about = "Critique-driven prompt optimization for binary note classification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the development loop, then validate every iteration.
    Optimize(RunArgs),
    /// Validate an existing development run that has no validation results yet.
    Validate(RunArgs),
    /// Score the configured lexicon on the validation corpus.
    Baseline(RunArgs),
    /// Sweep prevalences and seeds on the simulated backend.
    Simulate(SimulateArgs),
    /// Regenerate report tables from a run directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML config file.
    pub config: PathBuf,
    /// Backend mode, `live` or `sim` (overrides run.mode).
    #[arg(long)]
    pub mode: Option<Mode>,
    /// Seed (overrides run.seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum refinement iterations (overrides optimize.t_max).
    #[arg(long = "t-max")]
    pub t_max: Option<usize>,
    /// Run directory (overrides run.out).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Answer from the response cache where possible.
    #[arg(long)]
    pub resume: bool,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            mode: self.mode,
            seed: self.seed,
            t_max: self.t_max,
            out: self.out.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// TOML config file.
    pub config: PathBuf,
    /// Base seed (overrides run.seed).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seeds per prevalence (overrides simulate.seeds).
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Maximum refinement iterations (overrides optimize.t_max).
    #[arg(long = "t-max")]
    pub t_max: Option<usize>,
    /// Output directory (overrides run.out).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory written by `optimize`.
    pub run_dir: PathBuf,
    /// Report directory; defaults to `<run_dir>/report`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Transport(String),
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Transport(_) => EXIT_TRANSPORT,
            CliError::Failed(_) => EXIT_FAILURE,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Transport(m) => write!(f, "backend unreachable: {m}"),
            CliError::Failed(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<LexiconError> for CliError {
    fn from(e: LexiconError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { .. } => CliError::Failed(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<GatewayError> for CliError {
    fn from(e: GatewayError) -> Self {
        match e {
            GatewayError::Transport { .. } => CliError::Transport(e.to_string()),
            GatewayError::Protocol { status, .. } if status == 429 || status >= 500 => {
                CliError::Transport(e.to_string())
            }
            _ => CliError::Failed(e.to_string()),
        }
    }
}

impl From<AgentError> for CliError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Gateway(g) => g.into(),
            AgentError::Template(_) => CliError::Config(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Agent(a) => a.into(),
            PipelineError::InvalidOptions(_) => CliError::Config(e.to_string()),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Pipeline(p) => p.into(),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn io_failed(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::Failed(format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK });
        }
    };
    match execute(&cli.command) {
        Ok(()) => ExitCode::from(EXIT_OK),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

pub fn execute(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Optimize(a) => cmd_optimize(a),
        Command::Validate(a) => cmd_validate(a),
        Command::Baseline(a) => cmd_baseline(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Report(a) => cmd_report(&a.run_dir, a.out.as_deref()),
    }
}

/// Everything a run-scoped command needs after config resolution.
struct Session {
    config: Config,
    sop: Sop,
    templates: Templates,
    backend: Box<dyn Backend>,
    world: Option<Arc<SimWorld>>,
}

impl Session {
    fn open(args: &RunArgs) -> Result<Self, CliError> {
        let config = Config::load(&args.config, &args.overrides())?;
        let sop = match &config.run.sop {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("run.sop: {}: {e}", path.display())))?;
                Sop::new(text).map_err(|e| CliError::Config(format!("run.sop: {e}")))?
            }
            None => Sop::default(),
        };
        let templates = match &config.run.templates {
            Some(dir) => Templates::load_dir(dir).map_err(|e| CliError::Config(format!("run.templates: {e}")))?,
            None => Templates::builtin(),
        };
        let (backend, world): (Box<dyn Backend>, _) = match config.corpus_source()? {
            CorpusSource::Simulated { n, prevalence } => {
                let world = Arc::new(build_world(n, prevalence, config.run.seed, config.sim_params())?);
                (Box::new(SimBackend::new(Arc::clone(&world))), Some(world))
            }
            CorpusSource::Files { .. } => (Box::new(LiveBackend::new(config.backend_config(args.resume))?), None),
        };
        Ok(Self {
            config,
            sop,
            templates,
            backend,
            world,
        })
    }

    fn corpora(&self) -> Result<(Corpus, Corpus), CliError> {
        match (&self.world, self.config.corpus_source()?) {
            (Some(w), _) => Ok((w.dev().clone(), w.val().clone())),
            (None, CorpusSource::Files { dev, val }) => {
                let load = |key: &str, path: &Path, split| {
                    load_corpus(path, split).map_err(|e| CliError::Config(format!("{key}: {e}")))
                };
                Ok((load("data.dev", &dev, Split::Dev)?, load("data.val", &val, Split::Val)?))
            }
            (None, CorpusSource::Simulated { .. }) => unreachable!("simulated sessions carry a world"),
        }
    }

    fn optimizer(&self) -> Result<Optimizer<'_>, CliError> {
        Ok(Optimizer::new(self.backend.as_ref(), &self.templates, self.config.run_options())?
            .with_generation(self.config.backend.temperature, self.config.backend.max_tokens))
    }

    fn out(&self) -> &Path {
        &self.config.run.out
    }
}

fn fmt_rate(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |x| format!("{x:.3}"))
}

fn describe(m: &Metrics) -> String {
    format!(
        "sensitivity {} specificity {} F1 {:.3} accuracy {:.3}",
        fmt_rate(m.sensitivity),
        fmt_rate(m.specificity),
        m.f1,
        m.accuracy
    )
}

fn cmd_optimize(args: &RunArgs) -> Result<(), CliError> {
    let session = Session::open(args)?;
    let out = session.out().to_path_buf();
    artifacts::prepare_dir(&out)?;
    let (dev, val) = session.corpora()?;
    if session.world.is_some() {
        dev.save(&out.join(DEV_CORPUS_FILE))?;
        val.save(&out.join(VAL_CORPUS_FILE))?;
    }
    let optimizer = session.optimizer()?;
    let thresholds = session.config.thresholds()?;
    let p0 = Prompt::initial(session.config.run.symptom.clone());
    let run = optimizer.run_development(&p0, &session.sop, &dev, &thresholds)?;

    let manifest = RunManifest {
        condition: session.config.run.symptom.clone(),
        mode: session.config.run.mode.name().into(),
        seed: session.config.run.seed,
        thresholds,
        options: session.config.run_options(),
        dev_prevalence: prevalence(&dev),
        val_prevalence: prevalence(&val),
        config: serde_json::to_value(&session.config).expect("config serializes"),
    };
    artifacts::write_development(&out, &manifest, &run)?;
    let validation = optimizer.run_validation(&run.trajectory, &session.sop, &val, true)?;
    artifacts::write_json(&out.join(VALIDATION_FILE), &validation)?;

    print_trajectory(&run.trajectory);
    let sel = validation.selected_index;
    println!(
        "selected iteration {sel} ({}): dev F1 {:.3}, val F1 {:.3}, dev-val gap {:+.3}",
        run.trajectory.selection_strategy, validation.dev_f1_selected, validation.val_f1_selected, validation.dev_val_gap
    );
    println!("artifacts written to {}", out.display());
    Ok(())
}

fn print_trajectory(trajectory: &Trajectory) {
    for r in &trajectory.records {
        println!(
            "t={} {}{}",
            r.t,
            describe(&r.dev_metrics),
            if r.reverted { " (reverted)" } else { "" }
        );
    }
    println!("terminated: {:?} after {} iteration(s)", trajectory.termination, trajectory.records.len());
}

fn cmd_validate(args: &RunArgs) -> Result<(), CliError> {
    let session = Session::open(args)?;
    let out = session.out();
    let trajectory = artifacts::load_trajectory(out)?;
    let path = out.join(VALIDATION_FILE);
    if path.exists() {
        return Err(CliError::Config(format!("{} already exists; validation is not rerun in place", path.display())));
    }
    let (_, val) = session.corpora()?;
    let validation = session.optimizer()?.run_validation(&trajectory, &session.sop, &val, true)?;
    artifacts::write_json(&path, &validation)?;
    for e in &validation.entries {
        println!("t={} val {}", e.t, describe(&e.val_metrics));
    }
    println!(
        "selected iteration {}: val F1 {:.3}",
        validation.selected_index, validation.val_f1_selected
    );
    Ok(())
}

fn cmd_baseline(args: &RunArgs) -> Result<(), CliError> {
    let session = Session::open(args)?;
    let path = session
        .config
        .baseline
        .lexicon
        .clone()
        .ok_or_else(|| CliError::Config("baseline.lexicon: required for the baseline command".into()))?;
    let lexicon = Lexicon::load(&path)?;
    let (_, val) = session.corpora()?;
    let metrics = lexicon_evaluate(&lexicon, &val);
    println!("lexicon {} ({} terms): {}", lexicon.name(), lexicon.terms().len(), describe(&metrics));

    let out = session.out();
    let baseline_path = out.join(BASELINE_FILE);
    if baseline_path.exists() {
        return Err(CliError::Config(format!("{} already exists", baseline_path.display())));
    }
    fs::create_dir_all(out).map_err(io_failed(out))?;
    artifacts::write_json(
        &baseline_path,
        &BaselineArtifact {
            lexicon: lexicon.name().to_string(),
            val_metrics: metrics,
        },
    )?;

    if out.join(TRAJECTORY_FILE).exists() && out.join(VALIDATION_FILE).exists() {
        let manifest = artifacts::load_manifest(out)?;
        let validation = artifacts::load_validation(out)?;
        let selected = validation
            .entry(validation.selected_index)
            .ok_or_else(|| CliError::Config("validation.json lacks the selected iteration".into()))?;
        let row = comparison_row(&manifest.condition, manifest.val_prevalence, &selected.val_metrics, &metrics);
        println!(
            "optimized F1 {:.3} vs lexicon F1 {:.3}: {}",
            row.optimized_f1,
            row.lexicon_f1,
            format_percent(row.delta_percent)
        );
        let report = out.join(REPORT_DIR);
        fs::create_dir_all(&report).map_err(io_failed(&report))?;
        let csv_path = report.join("comparison.csv");
        fs::write(&csv_path, comparison_csv(&[row])).map_err(io_failed(&csv_path))?;
    }
    Ok(())
}

fn cmd_simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let mut config = Config::load(
        &args.config,
        &Overrides {
            seed: args.seed,
            t_max: args.t_max,
            out: args.out.clone(),
            ..Overrides::default()
        },
    )?;
    if let Some(s) = args.seeds {
        config.simulate.seeds = s;
    }
    let params = config.experiment_params()?;
    let out = config.run.out.clone();
    let summary_path = out.join("summary.json");
    if summary_path.exists() {
        return Err(CliError::Config(format!("{} already contains a simulation", out.display())));
    }
    let (summary, traces) = run_instability_experiment(&config.simulate.prevalences, config.simulate.seeds, &params)?;

    let trace_dir = out.join("traces");
    fs::create_dir_all(&trace_dir).map_err(io_failed(&trace_dir))?;
    for t in &traces {
        let path = trace_dir.join(format!("p{}_seed{}.csv", t.prevalence, t.seed));
        fs::write(&path, t.to_csv()).map_err(io_failed(&path))?;
    }
    let csv_path = out.join("summary.csv");
    fs::write(&csv_path, summary.to_csv()).map_err(io_failed(&csv_path))?;
    artifacts::write_json(&summary_path, &summary)?;

    println!("prevalence  seeds  amplitude  collapse_freq  final_val_f1  selected_val_f1");
    for r in &summary.rows {
        println!(
            "{:<10}  {:>5}  {:>9.3}  {:>13.2}  {:>12.3}  {:>15.3}",
            r.prevalence, r.seeds, r.mean_amplitude, r.collapse_frequency, r.mean_final_val_f1, r.mean_selected_val_f1
        );
    }
    println!("simulation written to {}", out.display());
    Ok(())
}

pub fn cmd_report(run_dir: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let out = out.map_or_else(|| run_dir.join(REPORT_DIR), Path::to_path_buf);
    let written = reporting::write_report(run_dir, &out)?;
    for name in written {
        println!("{}", out.join(name).display());
    }
    Ok(())
}
