//! Command-line driver: argument parsing, settings files, and the wiring
//! that turns subcommands into library calls. Exit codes: 0 success, 1
//! hard failure, 2 usage error.

mod args;
mod commands;
mod config;
mod stages;

use clap::Parser;

pub use args::{Cli, Command};
pub use config::{load_settings, Settings};

/// Error class that exits with the usage code instead of the runtime one.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn run() -> i32 {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    let settings = match load_settings(cli.config.as_deref()) {
        Ok(settings) => settings,
        Err(err) => {
            eprintln!("error: {err}");
            return 2;
        }
    };
    match commands::execute(cli.command, &settings) {
        Ok(code) => code,
        Err(err) => {
            let code = exit_code_for(&err);
            eprintln!("error: {err:#}");
            code
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => "warn",
        1 => "info",
        2 => "debug",
        _ => "trace",
    };
    let env = env_logger::Env::default().default_filter_or(level);
    let _ = env_logger::Builder::from_env(env)
        .format_timestamp(None)
        .try_init();
}

/// Bad selections and out-of-range knobs are usage mistakes; everything
/// else is a runtime failure.
fn exit_code_for(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    if let Some(core) = err.downcast_ref::<sodaug_core::Error>() {
        use sodaug_core::Error;
        if matches!(
            core,
            Error::UnknownStrategy { .. }
                | Error::MissingCommandTemplate
                | Error::InvalidBeta { .. }
                | Error::GridSizeZero
                | Error::GridPeriodTooSmall { .. }
                | Error::KeepRatioOutOfRange { .. }
                | Error::ProbabilityOutOfRange { .. }
        ) {
            return 2;
        }
    }
    1
}
