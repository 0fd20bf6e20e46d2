use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = cdmarl::cli::Cli::parse();
    match cdmarl::cli::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
