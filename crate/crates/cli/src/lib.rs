//! Command-line front end: CSV ingestion with time-series column layouts,
//! simulation and estimation subcommands, report serialization, and model
//! checkpoints.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical or
//! convergence error.

pub mod checkpoint;
pub mod cli;
pub mod csv_io;
pub mod error;
pub mod exec;
pub mod report;

use clap::Parser;

pub use error::AppError;

/// Parses `argv` and runs the requested subcommand, returning the process
/// exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let parsed = match cli::Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // clap prints help/version to stdout (exit 0) and usage errors
            // to stderr (exit 2)
            let code = e.exit_code();
            let _ = e.print();
            return code;
        }
    };
    match dispatch(parsed) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(parsed: cli::Cli) -> Result<(), AppError> {
    match parsed.command {
        cli::Command::Simulate(args) => {
            let opts = args.into_opts()?;
            exec::run_simulate(&opts)
        }
        cli::Command::Estimate(args) => {
            let opts = args.into_opts()?;
            exec::run_estimate(&opts)
        }
    }
}
