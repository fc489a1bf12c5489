//! `peakon-lab`: run reproducible peakon-perturbation experiments.
//!
//! Exit codes: 0 all in-run audits passed, 1 an audit failed, 2 usage or
//! configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use peakon_core::experiment::{self, ExperimentConfig, Scenario};

#[derive(Parser)]
#[command(name = "peakon-lab", version, about = "Peakon perturbation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario described by a config file.
    Run {
        /// Path to a `key = value` config file.
        config: PathBuf,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the time step.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the final time.
        #[arg(long, value_name = "T")]
        t_end: Option<f64>,
    },
    /// Run the convolution-identity suite with seeded random data.
    Identities {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Override the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cfg: &ExperimentConfig) -> ExitCode {
    match experiment::run(cfg) {
        Ok(outcome) => {
            for (k, v) in &outcome.report {
                println!("{k} = {v}");
            }
            if outcome.passed {
                println!("all audits passed");
                ExitCode::SUCCESS
            } else {
                eprintln!("audit failure: {}", outcome.failures[0]);
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, out, dt, t_end } => {
            let text = match std::fs::read_to_string(&config) {
                Ok(t) => t,
                Err(err) => {
                    eprintln!("error: cannot read {}: {err}", config.display());
                    return ExitCode::from(2);
                }
            };
            let mut cfg = match experiment::parse_config(&text) {
                Ok(c) => c,
                Err(err) => {
                    eprintln!("config error: {err}");
                    return ExitCode::from(2);
                }
            };
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            if let Some(dt) = dt {
                cfg.dt = dt;
            }
            if let Some(t) = t_end {
                cfg.t_end = t;
            }
            execute(&cfg)
        }
        Command::Identities { seed, out } => {
            let mut cfg = experiment::scenario_config(Scenario::Identities);
            cfg.seed = seed;
            if let Some(out) = out {
                cfg.output_dir = out;
            }
            execute(&cfg)
        }
    }
}
