//! `defocus` command-line tool.

mod commands;

use std::fmt;
use std::process::ExitCode;

use clap::Parser;

use commands::Command;

#[derive(Debug, Parser)]
#[command(name = "defocus", version, about = "Thin-lens defocus blur modeling, refocusing and calibration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// A well-formed command line whose arguments do not fit together.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    let usage = err.chain().any(|e| {
        e.is::<UsageError>() || e.downcast_ref::<defocus::Error>().is_some_and(defocus::Error::is_config_error)
    });
    if usage {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
