use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    ExitCode::from(mozart_cli::run(mozart_cli::Cli::parse()))
}
