use std::process::ExitCode;

use clap::Parser;

use scorefuse_cli::cli::Cli;
use scorefuse_cli::{exit, run};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::from(exit::OK as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit::code_for(&e) as u8)
        }
    }
}
