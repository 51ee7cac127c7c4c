//! `besov`: runs one experiment described by a JSON config and writes
//! `report.json` plus CSV data files.
//!
//! Exit codes: 0 when every declared check passes, 2 when a check fails,
//! 1 for usage or configuration errors.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::Value;

use config::{parse_config, CliError, CliResult, Context, GridConfig};

#[derive(Debug, Parser)]
#[command(
    name = "besov",
    version,
    about = "Deterministic experiment runner for weighted Besov-space analysis"
)]
struct Args {
    /// Subcommand; must match the config's `command` when given.
    command: Option<String>,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for report.json and CSV files.
    #[arg(long)]
    out: PathBuf,
}

fn run(args: &Args) -> CliResult<bool> {
    if let Some(c) = &args.command {
        if !commands::COMMANDS.contains(&c.as_str()) {
            return Err(commands::unknown_command(c));
        }
    }
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let raw: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
    let cfg = parse_config(&text)?;
    if !commands::COMMANDS.contains(&cfg.command.as_str()) {
        return Err(commands::unknown_command(&cfg.command));
    }
    if let Some(c) = &args.command {
        if *c != cfg.command {
            return Err(CliError::Config(format!(
                "command {c:?} on the command line but {:?} in the config",
                cfg.command
            )));
        }
    }
    let ctx = Context::new(&cfg)?;
    let params = cfg.params.clone().unwrap_or_else(|| Value::Object(Default::default()));
    let (resolved, out) = commands::dispatch(&cfg.command, &ctx, params)?;
    let grid = cfg.grid.unwrap_or_default();
    let env = report::Envelope {
        command: &cfg.command,
        seed: cfg.seed,
        grid: serde_json::to_value::<GridConfig>(grid).map_err(std::io::Error::from)?,
        config: &raw,
        resolved: &resolved,
    };
    report::write(&args.out, &env, &out)?;
    for c in &out.checks {
        let mark = if c.pass { "pass" } else { "FAIL" };
        println!("[{mark}] {}: {}", c.name, c.detail);
    }
    Ok(out.pass())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&args) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("besov: {e}");
            ExitCode::from(1)
        }
    }
}
