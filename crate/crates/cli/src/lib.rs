//! Command-line driver for the field-boundary pipeline.
//!
//! [`run_cli`] parses arguments, sets up structured logging and maps the
//! outcome onto the process exit status: 0 success, 1 usage error, 2 input
//! error, 3 partial tile failure.

pub mod artifacts;
pub mod cli;
pub mod config;
pub mod failure;
pub mod fixture;
pub mod pipeline;
pub mod stages;

use clap::Parser;
use tracing_subscriber::EnvFilter;

/// JSON log lines on stderr. Later calls in the same process keep the first
/// subscriber.
fn init_logging(filter: &str) {
    let filter = EnvFilter::try_new(filter).unwrap_or_else(|_| EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_current_span(false)
        .try_init();
}

pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match cli::Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    init_logging(&cli.log);
    match cli::execute(&cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.to_json());
            f.exit_code()
        }
    }
}
