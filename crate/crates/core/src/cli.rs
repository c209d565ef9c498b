//! Command-line front end. Exit codes: 0 success, 1 usage error, 2 runtime
//! failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::data::{file_has_provenance, hindsight_relabel, load_dataset, write_dataset, DataError};
use crate::env::{generate_demos, EnvError, EnvKind};
use crate::eval::{evaluate, EvalError};
use crate::io::write_atomic;
use crate::model::{closed_form_param_count, load_checkpoint, read_header, CheckpointError};
use crate::trainer::{self, describe_keys, provenance_counts, TrainConfig, TrainError, TrainMode};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_)
            | CliError::Train(TrainError::Config { .. } | TrainError::Invalid(_)) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gcdt",
    version,
    about = "Goal-conditioned decision transformer toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Roll the scripted expert and write demonstrations (JSON Lines plus a
    /// `.tasks.json` sidecar).
    GenData(GenDataArgs),
    /// Append hindsight-relabeled prefixes to a dataset of original demos.
    Augment(AugmentArgs),
    /// Multi-objective pretraining on one or more tasks.
    #[command(after_help = config_help())]
    Pretrain(TrainArgs),
    /// Action-only training on a single task, optionally from a checkpoint.
    #[command(after_help = config_help())]
    Finetune(TrainArgs),
    /// Roll out a checkpoint in a bundled environment and report success rates.
    Eval(EvalArgs),
    /// Print a checkpoint's configuration, tasks and parameter manifest.
    Inspect(InspectArgs),
}

fn config_help() -> String {
    format!(
        "Config file: one `key = value` per line, `#` starts a comment. Keys:\n{}",
        describe_keys()
    )
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Environment: reach3d, pickplace3d or bireach3d.
    #[arg(long)]
    pub env: String,
    /// Number of successful expert episodes to record (at least 1).
    #[arg(long)]
    pub episodes: usize,
    /// Seed for episode resets.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset path; the sidecar is written next to it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Dataset of original (unaugmented) trajectories.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output dataset path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Checkpoint to start from; overrides `init` in the config.
    #[arg(long)]
    pub init: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Checkpoint to evaluate.
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Environment, which must be one of the checkpoint's tasks.
    #[arg(long)]
    pub env: String,
    /// Episodes per seed.
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Comma-separated evaluation seeds.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub seeds: Vec<u64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Checkpoint to describe.
    #[arg(long)]
    pub ckpt: PathBuf,
}

fn write_output(path: &Path, text: &str) -> Result<(), CliError> {
    write_atomic(path, text.as_bytes()).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn parse_env(name: &str) -> Result<EnvKind, CliError> {
    name.parse()
        .map_err(|e: EnvError| CliError::Usage(e.to_string()))
}

fn gen_data(a: &GenDataArgs) -> Result<(), CliError> {
    let kind = parse_env(&a.env)?;
    if a.episodes == 0 {
        return Err(CliError::Usage("--episodes must be at least 1".into()));
    }
    let report = generate_demos(kind, a.episodes, a.seed, &a.out)?;
    println!(
        "{}: {} episodes to {} (lengths {}..={}, mean {:.2}, expected {}, {} failed attempts)",
        report.env,
        report.episodes,
        a.out.display(),
        report.min_length,
        report.max_length,
        report.mean_length,
        report.expected_steps,
        report.failed_attempts
    );
    Ok(())
}

fn augment(a: &AugmentArgs) -> Result<(), CliError> {
    if file_has_provenance(&a.input)? {
        return Err(CliError::Usage(format!(
            "{} is already augmented (provenance flags present)",
            a.input.display()
        )));
    }
    let dataset = load_dataset(&a.input)?;
    let out = hindsight_relabel(&dataset)?;
    write_dataset(&a.out, &out)?;
    let (original, relabeled) = provenance_counts(&out);
    println!(
        "{original} original + {relabeled} relabeled trajectories to {}",
        a.out.display()
    );
    Ok(())
}

/// Whether the config text sets `mode` explicitly.
fn sets_mode(text: &str) -> bool {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .any(|(k, _)| k.trim() == "mode")
}

fn train(mode: TrainMode, a: &TrainArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", a.config.display())))?;
    let mut cfg = TrainConfig::parse(&text, a.config.parent().unwrap_or(Path::new(".")))?;
    if sets_mode(&text) && cfg.mode != mode {
        return Err(CliError::Usage(format!(
            "config sets mode = {}, command is {}",
            cfg.mode, mode
        )));
    }
    cfg.mode = mode;
    if let Some(init) = &a.init {
        cfg.init = Some(init.clone());
    }
    let outcome = trainer::run(&cfg)?;
    let out = cfg.out.as_deref().map(Path::display);
    println!(
        "{mode}: {} steps on {}, {} parameters ({} freshly initialized), checkpoint {}",
        cfg.steps,
        cfg.tasks.join(","),
        outcome.bundle.param_count(),
        outcome.fresh_params.len(),
        out.map(|p| p.to_string()).unwrap_or_default()
    );
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<(), CliError> {
    parse_env(&a.env)?;
    if a.episodes == 0 || a.seeds.is_empty() {
        return Err(CliError::Usage(
            "--episodes and --seeds must be non-empty".into(),
        ));
    }
    let bundle = load_checkpoint(&a.ckpt)?;
    let report = evaluate(&a.env, &bundle, a.episodes, &a.seeds)?;
    match &a.out {
        Some(path) => write_output(path, &report.to_json())?,
        None => print!("{}", report.to_json()),
    }
    Ok(())
}

fn inspect(a: &InspectArgs) -> Result<(), CliError> {
    let header = read_header(&a.ckpt)?;
    let c = &header.config;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "config: n_layers={} n_heads={} d_model={} max_timesteps={} dropout={}",
        c.n_layers, c.n_heads, c.d_model, c.max_timesteps, c.dropout
    );
    for spec in header.tasks.values() {
        let _ = writeln!(
            s,
            "task {}: obs_dim={} goal_dim={} act_dim={} max_episode_steps={} expected_steps={} success_threshold={}",
            spec.task_id,
            spec.obs_dim,
            spec.goal_dim,
            spec.act_dim,
            spec.max_episode_steps,
            spec.expected_steps,
            spec.success_threshold
        );
    }
    let _ = writeln!(s, "parameters:");
    for e in &header.manifest {
        let numel: usize = e.shape.iter().product();
        let _ = writeln!(s, "  {:<48} {:?} {numel}", e.name, e.shape);
    }
    let total = header.total_params();
    let closed = closed_form_param_count(c, &header.tasks);
    let verdict = if total == closed { "match" } else { "MISMATCH" };
    let _ = writeln!(s, "total parameters: {total}");
    let _ = writeln!(s, "closed-form count: {closed} ({verdict})");
    print!("{s}");
    Ok(())
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Augment(a) => augment(a),
        Command::Pretrain(a) => train(TrainMode::Pretrain, a),
        Command::Finetune(a) => train(TrainMode::Finetune, a),
        Command::Eval(a) => eval(a),
        Command::Inspect(a) => inspect(a),
    }
}

/// Parses `std::env::args`, runs the command and maps the outcome to an exit code.
pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
