//! The `scorefuse` command-line tool.
//!
//! Each subcommand is a plain function in [`commands`] so it can be driven
//! from tests without spawning a process.

pub mod artifact;
pub mod cli;
pub mod commands;
pub mod config;
pub mod exit;

use scorefuse::Result;

use cli::{Cli, Command};

/// Run a parsed command line. Returns text destined for stdout.
pub fn run(cli: &Cli) -> Result<String> {
    match &cli.command {
        Command::Score(a) => commands::score(a).map(|_| String::new()),
        Command::Fuse(a) => commands::fuse(a).map(|_| String::new()),
        Command::Eval(a) => commands::eval(a),
        Command::Grid(a) => commands::grid(a),
        Command::Correlate(a) => commands::correlate(a).map(|_| String::new()),
        Command::Synth(a) => commands::synth(a).map(|_| String::new()),
    }
}
