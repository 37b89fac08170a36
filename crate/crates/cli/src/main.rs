use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use typology_core::pipeline::{Outcome, Pipeline, PipelineError};
use typology_core::Typology;

#[derive(Parser)]
#[command(name = "typology", version, about = "City transportation typology from Wikipedia pages")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Pipeline config file (TOML).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Seed override for splits, folds and model fitting.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
}

#[derive(clap::Args)]
struct TaskArgs {
    #[command(flatten)]
    common: Common,
    /// Restrict to one typology; all four by default.
    #[arg(long, value_parser = parse_task)]
    task: Option<Typology>,
}

impl TaskArgs {
    fn tasks(&self) -> Vec<Typology> {
        self.task.map_or_else(|| Typology::ALL.to_vec(), |t| vec![t])
    }
}

#[derive(Subcommand)]
enum Command {
    /// Fetch pages and extract sentences and infobox values.
    Ingest(Common),
    /// Embed every ingested page into the embedding cache.
    Embed(Common),
    /// Build anchor-only and full candidate keyline sets.
    Candidates(TaskArgs),
    /// Greedy keyline-set expansion.
    Expand(TaskArgs),
    /// Fit the typology classifiers.
    Train(TaskArgs),
    /// Compare the 21 feature subsets on the test split.
    Sweep(TaskArgs),
    /// Score the predict list with the trained models.
    Predict(Common),
    /// Via odds ratios and the Via-presence model.
    Feasibility(Common),
}

fn parse_task(s: &str) -> Result<Typology, String> {
    s.parse().map_err(|e: typology_core::typology::ParseTypologyError| e.to_string())
}

fn open(common: &Common) -> Result<Pipeline, PipelineError> {
    Ok(Pipeline::load(&common.config)?.with_seed(common.seed))
}

fn run(cmd: &Command) -> Result<Outcome, PipelineError> {
    match cmd {
        Command::Ingest(c) => open(c)?.ingest(),
        Command::Embed(c) => open(c)?.embed(),
        Command::Candidates(a) => open(&a.common)?.candidates(&a.tasks()),
        Command::Expand(a) => open(&a.common)?.expand(&a.tasks()),
        Command::Train(a) => open(&a.common)?.train(&a.tasks()),
        Command::Sweep(a) => open(&a.common)?.sweep(&a.tasks()),
        Command::Predict(c) => open(c)?.predict(),
        Command::Feasibility(c) => open(c)?.feasibility(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match run(&cli.command) {
        Ok(outcome) => {
            for line in &outcome.summary {
                println!("{line}");
            }
            ExitCode::from(outcome.exit_code() as u8)
        }
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(2)
        }
    }
}
