use std::process::ExitCode;

use clap::Parser;
use gazelabel::cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(msg) => {
            print!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
