//! Command-line front end for `zoegd`.
//!
//! ```text
//! zoegd run --problem saddle_quadratic --dim 2 --epsilon 0.01 --seed 7 --out trace.json
//! zoegd tailbound --dim 5 --a2 20 --mc 1000000
//! ```
//!
//! Exit status is 0 on success, 2 for configuration errors and 1 for
//! failures while running or writing results.

pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;

pub use config::{Budget, Command, ExperimentConfig, OutputFormat, ParseOutcome};
pub use output::{write_results, Record, Report};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "ZOEGD_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] zoegd::Error),
    #[error(transparent)]
    Write(#[from] output::WriteError),
    #[error("configuration error in `{THREADS_ENV}`: {0}")]
    Threads(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_configuration() => 2,
            CliError::Threads(_) => 2,
            _ => 1,
        }
    }
}

/// Sizes the global worker pool from `ZOEGD_THREADS` if it is set. Only the
/// first call in a process has an effect.
fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize =
        raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
            CliError::Threads(format!("expected a positive integer, got `{raw}`"))
        })?;
    // Fails only when the pool already exists.
    if rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .is_err()
    {
        log::debug!("worker pool already initialized; {THREADS_ENV} ignored");
    }
    Ok(())
}

pub fn dispatch(cfg: &ExperimentConfig) -> Result<(), CliError> {
    cfg.validate()?;
    match cfg.command {
        Command::Run => commands::run(cfg),
        Command::Estimate => commands::estimate(cfg),
        Command::Escape => commands::escape(cfg),
        Command::Coupling => commands::coupling(cfg),
        Command::Scaling => commands::scaling(cfg),
        Command::Tailbound => commands::tailbound(cfg),
    }
}

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn parse_and_dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cfg = match ExperimentConfig::parse_from(argv) {
        ParseOutcome::Config(cfg) => cfg,
        ParseOutcome::Info(text) => {
            print!("{text}");
            return 0;
        }
        ParseOutcome::Invalid(text) => {
            eprint!("{text}");
            return 2;
        }
    };
    let result = configure_threads().and_then(|_| dispatch(&cfg));
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
