//! Command-line orchestration: configuration, scenario runners and file I/O.

pub mod commands;
pub mod config;
pub mod output;

use std::path::Path;

use thiserror::Error;

use crate::error::Error;

pub use commands::{run_choose_k, run_example34, run_identify, run_solve};
pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_IDENTIFY: i32 = 4;
pub const EXIT_CONTRADICTION: i32 = 5;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("output error: {0}")]
    Output(String),
    #[error("solver failure: {0}")]
    Solver(Error),
    #[error("identification failure: {0}")]
    Identification(Error),
    #[error("scenario contradiction: {0}")]
    Contradiction(String),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(_) | Error::Resolution { .. } => CliError::Config(e.to_string()),
            other => CliError::Solver(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Output(_) => EXIT_CONFIG,
            CliError::Solver(_) => EXIT_SOLVER,
            CliError::Identification(_) => EXIT_IDENTIFY,
            CliError::Contradiction(_) => EXIT_CONTRADICTION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    ChooseK,
    Identify,
    Example34,
}

/// Load the config, run `command`, write its artifacts and return the exit code.
pub fn run(command: Command, config_path: &Path, out_dir: &Path) -> i32 {
    let result = RunConfig::load(config_path).and_then(|cfg| match command {
        Command::Solve => run_solve(&cfg, out_dir).map(|_| ()),
        Command::ChooseK => run_choose_k(&cfg, out_dir).map(|_| ()),
        Command::Identify => run_identify(&cfg, out_dir).map(|_| ()),
        Command::Example34 => run_example34(&cfg, out_dir).map(|_| ()),
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("periparab: {e}");
            e.exit_code()
        }
    }
}
