use std::process::ExitCode;

use clap::Parser;
use faultiso_cli::{run, Cli};

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("faultiso: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
