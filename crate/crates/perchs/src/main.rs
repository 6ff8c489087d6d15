use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use perchs::config::{ExperimentConfig, ExperimentKind};
use perchs::error::CliError;
use perchs::run::run;
use perchs::summarize::{render, summarize_files};

#[derive(Debug, Parser)]
#[command(name = "perchs", version, about = "Hele-Shaw, obstacle and homogenization experiments on perforated domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override a config entry, e.g. `--set model.period=0.125`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Snapshot cadence in steps (overrides `snapshot_every`).
    #[arg(long)]
    snapshot_every: Option<usize>,
    /// Worker threads for independent (epsilon, seed) jobs.
    #[arg(long, env = "PERCHS_JOBS", default_value_t = 1)]
    jobs: usize,
}

#[derive(Debug, Subcommand)]
enum Command {
    GenDomain(RunArgs),
    SolveLinear(RunArgs),
    Evolve(RunArgs),
    Corrector(RunArgs),
    Homogenize(RunArgs),
    ConvergeLinear(RunArgs),
    ConvergeHeleshaw(RunArgs),
    Green(RunArgs),
    Capacity(RunArgs),
    Probe(RunArgs),
    /// Per (metric, epsilon) statistics over seeds with monotonicity verdicts.
    Summarize {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

fn execute(kind: ExperimentKind, args: RunArgs) -> Result<(), CliError> {
    let mut sets = args.sets;
    if let Some(out) = &args.out {
        sets.push(format!("output_dir={}", serde_json::Value::String(out.display().to_string())));
    }
    if let Some(n) = args.snapshot_every {
        sets.push(format!("snapshot_every={n}"));
    }
    let cfg = ExperimentConfig::load(kind, &args.config, &sets)?;
    let summary = run(&cfg, args.jobs)?;
    eprintln!(
        "{}: {} jobs, {} records -> {}",
        kind.name(),
        summary.jobs,
        summary.records,
        summary.metrics_path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenDomain(a) => execute(ExperimentKind::GenDomain, a),
        Command::SolveLinear(a) => execute(ExperimentKind::SolveLinear, a),
        Command::Evolve(a) => execute(ExperimentKind::Evolve, a),
        Command::Corrector(a) => execute(ExperimentKind::Corrector, a),
        Command::Homogenize(a) => execute(ExperimentKind::Homogenize, a),
        Command::ConvergeLinear(a) => execute(ExperimentKind::ConvergeLinear, a),
        Command::ConvergeHeleshaw(a) => execute(ExperimentKind::ConvergeHeleshaw, a),
        Command::Green(a) => execute(ExperimentKind::Green, a),
        Command::Capacity(a) => execute(ExperimentKind::Capacity, a),
        Command::Probe(a) => execute(ExperimentKind::Probe, a),
        Command::Summarize { files } => summarize_files(&files).map(|s| print!("{}", render(&s))),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("perchs: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
