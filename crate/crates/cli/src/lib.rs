//! Command-line front end: configuration, spec parsing, output formats and
//! the acceptance suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod specs;
pub mod suite;

use std::ffi::OsString;
use std::io::Write;

use clap::Parser;

use crate::config::Cli;
use crate::error::CliError;

/// Parses `args`, runs the command and returns the process exit code:
/// 0 on pass, 1 on a failed verdict or runtime error, 2 on usage errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(passed) => i32::from(!passed),
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<bool, CliError> {
    let config = cli.into_config()?;
    let outcome = commands::run(&config)?;
    let mut stdout = std::io::stdout().lock();
    stdout.write_all(outcome.render_table().as_bytes()).map_err(|e| CliError::Io(e.to_string()))?;
    if let Some(path) = &config.out {
        outcome.write(&config, path)?;
    }
    Ok(outcome.passed)
}
