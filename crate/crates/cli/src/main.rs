use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    match hilbert_lab::run(hilbert_lab::Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
