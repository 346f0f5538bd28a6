mod args;
mod commands;
mod config;
mod specs;

use clap::Parser;
use commands::Failure;
use std::process::ExitCode;

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors
    let cli = args::Cli::parse();
    if cli.emit_config {
        eprint!("{}", config::RunConfig::from(&cli).to_toml());
    }
    match commands::run(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
