mod args;
mod commands;

use std::process::ExitCode;

use clap::Parser;
use nlsgap_core::Error;

use args::{Cli, Command};

/// Exit statuses: success, computational failure or failed assertion,
/// invalid usage or input.
const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(EXIT_USAGE);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    let outcome = match &cli.command {
        Command::Soliton(c) => commands::soliton(c),
        Command::Eigs(c) => commands::eigs(c),
        Command::Scan(c) => commands::scan(c),
        Command::Betastar(c) => commands::betastar(c),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILURE),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_status(&e))
        }
    }
}

fn exit_status(e: &Error) -> u8 {
    match e {
        Error::InvalidGrid(_) | Error::InvalidParameter(_) | Error::GridMismatch { .. } | Error::Format(_) => EXIT_USAGE,
        _ => EXIT_FAILURE,
    }
}
