//! `freecap`: eigenvalue densities, Monte Carlo verification and capacity
//! sweeps from the command line.
//!
//! Exit codes: 0 success, 1 verification failed, 2 usage error, 3 numerical
//! failure.

mod args;
mod commands;
mod error;
mod manifest;

use std::process::ExitCode;

use clap::Parser;

use crate::args::{Cli, Command};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Mp(a) => commands::mp(a),
        Command::Aepdf(a) => commands::aepdf(a),
        Command::Verify(a) => commands::verify(a),
        Command::Cellular(a) => commands::cellular(a),
        Command::Replay(a) => commands::replay(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
