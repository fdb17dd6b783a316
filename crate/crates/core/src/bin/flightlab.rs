//! Command-line runner for the scenario suite.
//!
//! Exit codes: 0 all criteria passed, 1 at least one criterion failed,
//! 2 invalid configuration.

use clap::{Parser, Subcommand};
use flightlab::scenario::{run_scenario, ScenarioConfig, SCENARIO_NAMES};
use flightlab::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "flightlab",
    version,
    about = "Simulation and statistical verification lab for Poisson-clocked random flights"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario described by a TOML config file.
    Run {
        /// Path to the scenario config.
        config: PathBuf,
        /// Output directory (overrides the config's out_dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for replicated sampling (0 = hardware default).
        #[arg(long)]
        threads: Option<usize>,
        /// Skip the decorative SVG plots.
        #[arg(long)]
        no_plots: bool,
    },
    /// List the known scenario names.
    ListScenarios,
    /// Parse and validate a config without running it.
    Validate {
        /// Path to the scenario config.
        config: PathBuf,
    },
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Error> {
    ScenarioConfig::from_path(path)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListScenarios => {
            for name in SCENARIO_NAMES {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load_config(&config).and_then(|c| c.validate()) {
            Ok(resolved) => {
                println!(
                    "{}",
                    serde_json::to_string_pretty(&resolved).unwrap_or_default()
                );
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("invalid config: {e}");
                ExitCode::from(2)
            }
        },
        Command::Run {
            config,
            out,
            threads,
            no_plots,
        } => {
            let mut cfg = match load_config(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("invalid config: {e}");
                    return ExitCode::from(2);
                }
            };
            if let Err(e) = cfg.validate() {
                eprintln!("invalid config: {e}");
                return ExitCode::from(2);
            }
            if let Some(t) = threads {
                cfg.threads = t;
            }
            if no_plots {
                cfg.plots = false;
            }
            match run_scenario(&cfg, out.as_deref()) {
                Ok(report) => {
                    for c in &report.criteria {
                        println!(
                            "{} {} — {}",
                            if c.passed { "PASS" } else { "FAIL" },
                            c.id,
                            c.description
                        );
                    }
                    if report.passed {
                        println!("all {} criteria passed", report.criteria.len());
                        ExitCode::SUCCESS
                    } else {
                        let failing: Vec<&str> = report
                            .criteria
                            .iter()
                            .filter(|c| !c.passed)
                            .map(|c| c.id.as_str())
                            .collect();
                        eprintln!("failing criteria: {}", failing.join(", "));
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
