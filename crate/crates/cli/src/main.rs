mod commands;
mod config;
mod output;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::process::ExitCode;

use clap::Parser;
use ramsey_core::Error;

use config::{Command, Options, RunConfig, UsageError};

/// Fisher-information analysis of the two-group Ramsey protocol under
/// collective dephasing, gate errors and spontaneous emission.
#[derive(Debug, Parser)]
#[command(name = "ramsey", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<UsageError> for Failure {
    fn from(e: UsageError) -> Self {
        Failure::Usage(e.0)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::TooManyAtoms { .. } | Error::Unsupported(_) => Failure::Usage(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut opts = cli.opts;
    if let Some(path) = opts.config.clone() {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
        opts = opts.merge_file(&text, &path)?;
    }
    let cfg = RunConfig::resolve(cli.command, opts)?;
    let rows = commands::run(&cfg)?;
    let io_err = |e: io::Error| Failure::Numerical(format!("write failed: {e}"));
    match &cfg.output {
        Some(path) => {
            let file = File::create(path).map_err(|e| Failure::Usage(format!("cannot create {}: {e}", path.display())))?;
            let mut w = BufWriter::new(file);
            output::write_rows(&mut w, &rows, cfg.format).map_err(io_err)?;
            w.flush().map_err(io_err)
        }
        None => output::write_rows(io::stdout().lock(), &rows, cfg.format).map_err(io_err),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
