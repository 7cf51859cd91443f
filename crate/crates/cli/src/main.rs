//! `ssdr`: extraction, training, evaluation and the experiment studies.
//!
//! Exit status: 0 on success, 1 for usage errors, 2 for data or weight
//! problems, 3 for numeric failures.

mod args;
mod commands;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use args::Cli;

/// A failed command and its exit status.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub const USAGE: u8 = 1;
    pub const DATA: u8 = 2;
    pub const NUMERIC: u8 = 3;

    pub fn data(message: String) -> Self {
        Self {
            code: Self::DATA,
            message,
        }
    }

    pub fn numeric(message: String) -> Self {
        Self {
            code: Self::NUMERIC,
            message,
        }
    }
}

impl From<ssdr_core::Error> for Failure {
    fn from(e: ssdr_core::Error) -> Self {
        let code = if e.is_usage() {
            Self::USAGE
        } else if e.is_numeric() {
            Self::NUMERIC
        } else {
            Self::DATA
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(Failure::USAGE),
            };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match commands::run(cli.command, &cli.global) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
