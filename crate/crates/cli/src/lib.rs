//! Command-line pipeline: exact data generation, noise, training, prediction,
//! spectra, variant comparison and validation.

pub mod build;
pub mod commands;
pub mod config;
pub mod validate;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, ValueEnum};
use log::error;
use opdyn_core::node::TrainFailure;

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Generate,
    Noise,
    Train,
    Predict,
    Spectrum,
    Compare,
    Validate,
}

#[derive(Debug, Parser)]
#[command(name = "opdyn", version, about = "Learn operator dynamics from short-time Pauli coefficient data")]
pub struct Cli {
    pub command: Command,
    /// Configuration file of `section.key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Input file: trajectory, checkpoint or (for validate) any output file.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Output file; sidecars such as `<out>.config` are written next to it.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// `key=value` overrides applied after the configuration file.
    pub overrides: Vec<String>,
}

/// Raised when `validate` finds a failing check.
#[derive(Debug, thiserror::Error)]
#[error("{0} validation check(s) failed")]
pub struct ValidationFailed(pub usize);

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;

/// Exit status for an error: 2 for numerical failures, 1 otherwise.
pub fn exit_code(e: &anyhow::Error) -> i32 {
    for cause in e.chain() {
        if cause.is::<TrainFailure>() || cause.is::<ValidationFailed>() {
            return EXIT_NUMERICAL;
        }
        if let Some(ce) = cause.downcast_ref::<opdyn_core::Error>() {
            if ce.is_numerical() {
                return EXIT_NUMERICAL;
            }
        }
    }
    EXIT_USAGE
}

pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let name = format!("{:?}", cli.command).to_lowercase();
    let input = cli.input.as_deref();
    let out = cli.out.as_deref();
    commands::echo_config(&cfg, &name, out)?;
    match cli.command {
        Command::Generate => commands::generate(&cfg, out),
        Command::Noise => commands::noise(&cfg, input, out),
        Command::Train => commands::train_cmd(&cfg, input, out),
        Command::Predict => commands::predict_cmd(&cfg, input, out),
        Command::Spectrum => commands::spectrum_cmd(&cfg, input, out),
        Command::Compare => commands::compare_cmd(&cfg, input, out),
        Command::Validate => {
            let checks = validate::run_checks(&cfg, input)?;
            let text = validate::report(&checks);
            match out {
                Some(p) => std::fs::write(p, &text)?,
                None => print!("{text}"),
            }
            let failed = checks.iter().filter(|c| !c.pass).count();
            if failed > 0 {
                return Err(ValidationFailed(failed).into());
            }
            Ok(())
        }
    }
}

/// Parses `args` (program name first) and runs the command; returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            error!("{e:#}");
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
