//! `nlgames`: runs convergence experiments, property suites and oracle dumps.
//!
//! Exit codes: 0 on success, 1 when a property fails or a run cannot finish,
//! 2 when the configuration or the command line is invalid.

mod run;
mod table;
mod verify;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use nlgames::config::ExperimentConfig;
use nlgames::Error;

#[derive(Parser, Debug)]
#[command(name = "nlgames", version, about = "Game-theoretic solvers for nonlocal, eikonal and curvature-flow equations")]
struct Cli {
    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `[output] dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed; overrides the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for the node-parallel solvers (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve for every ε of the schedule and write the error table.
    Run,
    /// Run the property suites and report a verdict per property.
    Verify {
        /// Comma-separated suites; an empty list runs nothing.
        #[arg(long, value_delimiter = ',')]
        suites: Option<Vec<String>>,
        /// Plant a known fault to check that the suites catch it.
        #[arg(long, value_parser = ["non-monotone-f"])]
        inject_fault: Option<String>,
    },
    /// Write the oracle solutions of the configured problem.
    Oracle,
    /// Merge result tables with identical columns.
    Table {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
}

/// Failures that map to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn load_config(path: Option<&Path>) -> anyhow::Result<ExperimentConfig> {
    let path = path.ok_or_else(|| UsageError("this command needs --config PATH".into()))?;
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(ExperimentConfig::from_toml_str(&text)?)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<Error>() {
        Some(Error::Config(_) | Error::UnknownName { .. } | Error::Toml(_)) => 2,
        _ => 1,
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(UsageError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Run => {
            let mut cfg = load_config(cli.config.as_deref())?;
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            let report = run::run(&cfg, &out)?;
            eprintln!("wrote {} ({} rows)", report.csv.display(), report.rows);
            Ok(report.flagged == 0)
        }
        Command::Verify { suites, inject_fault } => {
            let cfg = match &cli.config {
                Some(p) => Some(load_config(Some(p))?),
                None => None,
            };
            let seed = cli.seed.or(cfg.as_ref().map(|c| c.seed)).unwrap_or(0);
            let selection = match suites {
                None => verify::SUITES.iter().map(|s| s.to_string()).collect(),
                Some(list) => list.into_iter().filter(|s| !s.trim().is_empty()).collect(),
            };
            let opts = verify::Options {
                suites: selection,
                seed,
                game: cfg.as_ref().map(|c| c.game),
                planted_fault: inject_fault.is_some(),
            };
            let report = verify::verify(&opts).map_err(|e| UsageError(e.to_string()))?;
            let json = serde_json::to_string_pretty(&report)?;
            println!("{json}");
            if let Some(dir) = cli.out {
                std::fs::create_dir_all(&dir)?;
                std::fs::write(dir.join("verify.json"), json + "\n")?;
            }
            Ok(report.all_pass)
        }
        Command::Oracle => {
            let cfg = load_config(cli.config.as_deref())?;
            let out = cli.out.unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
            for path in run::dump_oracles(&cfg, &out)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::Table { inputs } => {
            let merged = table::merge(&inputs)?;
            match cli.out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("table.csv"), merged)?;
                }
                None => print!("{merged}"),
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
