mod cli;
mod commands;
mod config;
mod output;
mod svg;

use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;

use cli::{Cli, Command};
use commands::Failure;

const EXIT_CONFIG: u8 = 1;
const EXIT_VERIFICATION: u8 = 2;

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(EXIT_CONFIG),
            };
        }
    };
    let result = match &cli.command {
        Command::Phase1(a) => commands::phase1(a),
        Command::Snowball(a) => commands::snowball(a),
        Command::Lattice(a) => commands::lattice(a),
        Command::VerifyOracle(a) => commands::verify_oracle(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("{}: configuration error: {e:#}", cli.command.name());
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Verification(msg)) => {
            eprintln!("{}: verification failed: {msg}", cli.command.name());
            ExitCode::from(EXIT_VERIFICATION)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("{}: {e:#}", cli.command.name());
            ExitCode::from(EXIT_CONFIG)
        }
    }
}
