//! `laborflow`: batch front end for the labor flow pipeline.

mod config;
mod error;
mod manifest;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::Config;
use crate::error::CliError;
use crate::pipeline::{Runner, Stage};

#[derive(Parser)]
#[command(name = "laborflow", version, about = "Labor flow network pipeline")]
struct Cli {
    /// Flat key = value config file.
    #[arg(long, env = "LABORFLOW_CONFIG", global = true)]
    config: Option<PathBuf>,
    /// Override one config key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory; overrides `out_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Generate synthetic input data with planted structure.
    Synth,
    /// Build the network and extract its core.
    Build,
    /// Detect the community hierarchy on the core.
    Detect,
    /// Entropy-reduction diagnostics with the shuffle null model.
    Diagnose,
    /// Over-represented label scores per cluster.
    Overrep,
    /// Prune the hierarchy into a save list.
    Prune,
    /// Group-level flux matrices.
    Flux,
    /// Flux and market cap trends, second-stage regression, skill report.
    Trends,
    /// Every stage in order, generating data first if no inputs are configured.
    All,
}

fn stage_of(c: Command) -> Option<Stage> {
    Some(match c {
        Command::Synth => Stage::Synth,
        Command::Build => Stage::Build,
        Command::Detect => Stage::Detect,
        Command::Diagnose => Stage::Diagnose,
        Command::Overrep => Stage::Overrep,
        Command::Prune => Stage::Prune,
        Command::Flux => Stage::Flux,
        Command::Trends => Stage::Trends,
        Command::All => return None,
    })
}

fn load_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    for spec in &cli.set {
        cfg.apply_override(spec)?;
    }
    if let Some(out) = &cli.out {
        cfg.set("out_dir", &out.to_string_lossy())?;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), (Option<Stage>, CliError)> {
    let cfg = load_config(cli).map_err(|e| (None, e))?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| (None, CliError::Config(format!("--threads: {e}"))))?;
    }
    let runner = Runner::new(&cfg).map_err(|e| (None, e))?;
    match stage_of(cli.command) {
        Some(stage) => runner.run(stage).map_err(|e| (Some(stage), e)),
        None => runner.run_all().map_err(|(s, e)| (Some(s), e)),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let err = CliError::Config(e.to_string().trim().to_string());
            eprintln!("{}", err.report(None));
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, e)) => {
            eprintln!("{}", e.report(stage.map(Stage::name)));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
