use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use composite_charging_cli::commands::{self, Outcome, RunOptions};
use composite_charging_cli::ScenarioConfig;

/// Composite equilibria of EV charging games.
#[derive(Debug, Parser)]
#[command(name = "ccharge", version, about)]
struct Cli {
    /// Scenario file (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Rescale the base load so its maximum is 1.
    #[arg(long, global = true)]
    normalize: bool,

    /// Worker threads for sweeps.
    #[arg(long, global = true, default_value_t = 1, value_name = "N")]
    jobs: usize,

    /// Directory for output files.
    #[arg(long, global = true, default_value = "out", value_name = "DIR")]
    out: PathBuf,

    /// Print the scenario with every default filled in and exit. Without
    /// --config, prints a template.
    #[arg(long, global = true)]
    print_config: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for one equilibrium; writes report.json and loads.csv.
    Solve,
    /// Sweep the coalition size; writes sweep.csv and sweep.json.
    Sweep,
    /// Run the learning dynamics and record them; writes trace.csv and report.json.
    DynamicsTrace,
    /// Re-check a saved report.
    Verify {
        /// Report to check; defaults to report.json in the output directory.
        #[arg(long, value_name = "PATH")]
        report: Option<PathBuf>,
    },
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig> {
    let path = path.context("--config is required")?;
    Ok(ScenarioConfig::from_path(path)?)
}

fn base_dir(path: &Path) -> &Path {
    path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."))
}

fn run(cli: Cli) -> Result<bool> {
    if cli.print_config {
        let config = match &cli.config {
            Some(p) => load_config(Some(p))?.with_explicit_defaults(),
            None => ScenarioConfig::template(),
        };
        println!("{}", serde_json::to_string_pretty(&config)?);
        return Ok(true);
    }
    let command = cli.command.context("no subcommand given (see --help)")?;
    let outcome: Outcome = match command {
        Command::Verify { report } => {
            let path = report.unwrap_or_else(|| cli.out.join("report.json"));
            commands::verify(&path)?
        }
        command => {
            let config_path = cli.config.as_deref();
            let config = load_config(config_path)?;
            let scenario = config.resolve(base_dir(config_path.unwrap()), cli.normalize)?;
            let opts = RunOptions {
                out: cli.out.clone(),
                jobs: cli.jobs,
            };
            match command {
                Command::Solve => commands::solve(&scenario, &opts)?,
                Command::Sweep => commands::sweep(&scenario, &opts)?,
                Command::DynamicsTrace => commands::dynamics_trace(&scenario, &opts)?,
                Command::Verify { .. } => unreachable!(),
            }
        }
    };
    for line in &outcome.summary {
        println!("{line}");
    }
    for file in &outcome.files {
        println!("wrote {}", file.display());
    }
    Ok(outcome.certified)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
