use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use wavecode::corpus::Tier;
use wavecode::gateway::TransportMode;
use wavecode::pipeline::{Pipeline, PipelineError, RunConfig, Stage, StageOptions, StageReport};
use wavecode::prompt::Method;

/// Probe language models for audio knowledge: prompt for synthesis code,
/// run it, score the audio.
#[derive(Debug, Parser)]
#[command(name = "wavecode", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    /// Redo the requested stages even if they are done.
    #[arg(long, global = true)]
    force: bool,
    /// Stop each stage after N samples (the stage stays pending).
    #[arg(long, global = true, value_name = "N", hide = true)]
    limit: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Load the target manifest and draw the sample.
    Sample,
    /// Render one prompt per sample.
    Prompt,
    /// Query the model for every prompt.
    Generate,
    /// Extract and run the returned programs.
    Execute,
    /// Embed generated audio and the references or labels.
    Embed,
    /// Compute FAD or forced-choice scores.
    Score,
    /// Write report.json, report.csv and report.md.
    Report,
    /// Every stage that is not done yet, in order.
    RunAll,
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        Some(match self {
            Command::Sample => Stage::Sampled,
            Command::Prompt => Stage::Prompted,
            Command::Generate => Stage::Generated,
            Command::Execute => Stage::Executed,
            Command::Embed => Stage::Embedded,
            Command::Score => Stage::Scored,
            Command::Report => Stage::Reported,
            Command::RunAll => return None,
        })
    }
}

/// Flags that override the config file.
#[derive(Debug, Args)]
struct Overrides {
    #[arg(long, global = true)]
    run_id: Option<String>,
    #[arg(long, global = true, value_name = "DIR")]
    runs_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    tier: Option<Tier>,
    #[arg(long, global = true)]
    method: Option<Method>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Target manifest (JSONL).
    #[arg(long, global = true, value_name = "FILE")]
    manifest: Option<PathBuf>,
    #[arg(long, global = true, value_name = "N")]
    cap_per_class: Option<usize>,
    #[arg(long, global = true, value_name = "FILE")]
    cassette: Option<PathBuf>,
    /// live, record or replay.
    #[arg(long, global = true)]
    transport: Option<TransportMode>,
    /// Interpreter command, e.g. "python3 {script_path}".
    #[arg(long, global = true, value_name = "CMD")]
    runner: Option<String>,
    /// Per-program wall-clock limit in seconds.
    #[arg(long, global = true, value_name = "SECS")]
    timeout: Option<f64>,
    #[arg(long, global = true, value_name = "N")]
    workers: Option<usize>,
    #[arg(long, global = true)]
    keep_workdirs: bool,
    /// Generated-audio embeddings: file:<path> or sidecar:<url>.
    #[arg(long, global = true, value_name = "SPEC")]
    provider: Option<String>,
    /// Reference-audio embeddings (notes tier).
    #[arg(long, global = true, value_name = "SPEC")]
    reference_provider: Option<String>,
    /// Label-text embeddings (environment and speech tiers).
    #[arg(long, global = true, value_name = "SPEC")]
    text_provider: Option<String>,
}

fn absolute(p: &Path) -> Result<PathBuf> {
    std::path::absolute(p).with_context(|| format!("cannot resolve {}", p.display()))
}

/// `file:` locations on the command line are relative to the working
/// directory, not to the config file.
fn provider_arg(spec: &str) -> Result<String> {
    match spec.strip_prefix("file:") {
        Some(path) => Ok(format!("file:{}", absolute(Path::new(path))?.display())),
        None => Ok(spec.to_string()),
    }
}

fn apply(cfg: &mut RunConfig, o: &Overrides) -> Result<()> {
    if let Some(v) = &o.run_id {
        cfg.run_id = v.clone();
    }
    if let Some(v) = &o.runs_dir {
        cfg.runs_dir = absolute(v)?;
    }
    if let Some(v) = o.tier {
        cfg.tier = v;
        if o.method.is_none() && cfg.method.is_some_and(|m| m.tier() != v) {
            cfg.method = None;
        }
    }
    if let Some(v) = o.method {
        cfg.method = Some(v);
    }
    if let Some(v) = o.seed {
        cfg.seed = v;
    }
    if let Some(v) = &o.manifest {
        cfg.sample.manifest = Some(absolute(v)?);
    }
    if let Some(v) = o.cap_per_class {
        cfg.sample.cap_per_class = Some(v);
    }
    if let Some(v) = &o.cassette {
        cfg.transport.cassette = Some(absolute(v)?);
    }
    if let Some(v) = o.transport {
        cfg.transport.mode = v;
    }
    if let Some(v) = &o.runner {
        cfg.sandbox.runner = Some(v.clone());
    }
    if let Some(v) = o.timeout {
        cfg.sandbox.timeout_secs = v;
    }
    if let Some(v) = o.workers {
        cfg.sandbox.workers = v;
    }
    if o.keep_workdirs {
        cfg.sandbox.keep_workdirs = true;
    }
    if let Some(v) = &o.provider {
        cfg.embedding.audio = Some(provider_arg(v)?);
    }
    if let Some(v) = &o.reference_provider {
        cfg.embedding.reference = Some(provider_arg(v)?);
    }
    if let Some(v) = &o.text_provider {
        cfg.embedding.text = Some(provider_arg(v)?);
    }
    Ok(())
}

fn print(report: &StageReport) {
    if report.skipped {
        println!("{}: already done", report.stage);
    } else {
        println!("{}: {} processed, {} failed", report.stage, report.processed, report.failed);
    }
}

fn run(cli: &Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(&absolute(path)?)?,
        None => RunConfig {
            base_dir: std::env::current_dir()?,
            ..RunConfig::default()
        },
    };
    apply(&mut cfg, &cli.overrides)?;
    let pipeline = Pipeline::open(cfg)?;
    let opts = StageOptions {
        force: cli.force,
        limit: cli.limit,
    };
    match cli.command.stage() {
        Some(stage) => print(&pipeline.run_stage(stage, opts)?),
        None => {
            // forcing the first stage invalidates all later ones
            for stage in Stage::ALL {
                let force = opts.force && stage == Stage::Sampled;
                print(&pipeline.run_stage(stage, StageOptions { force, ..opts })?);
            }
        }
    }
    if cli.command.stage().is_none() || cli.command.stage() == Some(Stage::Reported) {
        println!("run directory: {}", pipeline.run_dir().display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<PipelineError>() {
                Some(PipelineError::Interrupted { .. }) => ExitCode::from(3),
                Some(PipelineError::StageOrderViolation { .. }) => ExitCode::from(2),
                _ => ExitCode::FAILURE,
            }
        }
    }
}
