use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use decloc_cli::config::RunConfig;
use decloc_cli::pipeline::{run, summary_paths, StageBound};
use decloc_cli::CliError;

/// Unsupervised error mitigation for TDoA UWB indoor localization: cluster
/// channel impulse responses, score clusters by first-path/peak-path spread,
/// drop the worst signals per burst, and localize on the rest.
#[derive(Parser)]
#[command(name = "decloc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Produce the dataset (simulated or loaded) and write its CSV files.
    Simulate(StageArgs),
    /// Additionally pretrain the autoencoder and write its checkpoint.
    Pretrain(StageArgs),
    /// Additionally run every configured clustering method.
    Cluster(StageArgs),
    /// Additionally score clusters and write per-burst selections.
    Score(StageArgs),
    /// Additionally solve every burst position.
    Localize(StageArgs),
    /// Run everything and write the summary.
    Evaluate(StageArgs),
    /// Alias for the full pipeline.
    RunAll(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    /// Experiment configuration (TOML). Omitted keys — or the whole flag —
    /// fall back to the documented defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Global seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Command {
    fn split(self) -> (StageArgs, StageBound) {
        match self {
            Command::Simulate(a) => (a, StageBound::Dataset),
            Command::Pretrain(a) => (a, StageBound::Pretrain),
            Command::Cluster(a) => (a, StageBound::Cluster),
            Command::Score(a) => (a, StageBound::Score),
            Command::Localize(a) => (a, StageBound::Localize),
            Command::Evaluate(a) | Command::RunAll(a) => (a, StageBound::Evaluate),
        }
    }
}

fn execute(args: StageArgs, bound: StageBound) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(path) => RunConfig::from_file(path)?,
        None => RunConfig::default_config(),
    };
    let cfg = cfg.with_overrides(args.seed, args.out);
    let rows = run(&cfg, bound)?;
    if rows.is_some() {
        let (_, table) = summary_paths(&cfg.out_dir);
        let text = std::fs::read_to_string(&table).map_err(|source| CliError::Ingest {
            path: table,
            source,
        })?;
        print!("{text}");
    }
    println!("artifacts in {}", cfg.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, bound) = cli.command.split();
    match execute(args, bound) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
