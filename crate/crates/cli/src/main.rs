//! `steplab` command-line runner.

mod commands;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "steplab",
    version,
    about = "Run LIP step-to-step and kinematic walking experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Orbital-line parameters, targets, deadbeat gain and phase-portrait traces.
    Orbit(RunArgs),
    /// Step-to-step episode on the perturbed LIP plant.
    S2s(RunArgs),
    /// Kinematic walk on a floating-base model.
    Walk(RunArgs),
    /// Check a scenario document without running it.
    Validate(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Scenario document (JSON). Built-in defaults are used when absent.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the scenario's `output`.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Seed applied to every random source in the scenario.
    #[arg(long, value_name = "U64")]
    pub seed: Option<u64>,
    /// Override a field, e.g. `--set s2s.lip.z0=0.9`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Disable the neural regulator.
    #[arg(long)]
    pub no_adapt: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("STEPLAB_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Orbit(args) => commands::run(commands::Kind::Orbit, &args),
        Command::S2s(args) => commands::run(commands::Kind::S2s, &args),
        Command::Walk(args) => commands::run(commands::Kind::Walk, &args),
        Command::Validate(args) => commands::validate(&args),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
