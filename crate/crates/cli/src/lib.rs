//! Command-line front end for `figp`: file formats, TOML configuration and
//! the reproduction harness.
//!
//! Exit codes: 0 on success, 1 when a stage fails, 2 for usage errors.

pub mod args;
pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod reproduce;

use std::ffi::OsString;

use clap::Parser;

pub use args::Cli;
pub use commands::{execute, Context, Outcome};
pub use config::ExperimentConfig;
pub use error::{CliError, CliResult};

/// Parses `argv` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.verbose);
    match run_cli(&cli) {
        Ok(out) => {
            if cli.json {
                print!("{}", io::to_json(&out.json));
            } else {
                print!("{}", out.text);
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run_cli(cli: &Cli) -> CliResult<Outcome> {
    let config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let ctx = Context::from_cli(cli, config);
    execute(&cli.command, &ctx)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .try_init();
}
