//! The `flockdet` command line: synthesize or ingest data, prepare pair
//! datasets and scenes, train, run grids, detect and validate flocks.

pub mod commands;
pub mod config;
pub mod grid;
pub mod svg;

use flockdet_core::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Core(e) if e.is_numeric() => EXIT_NUMERIC,
            CliError::Core(Error::InvalidConfig(_)) => EXIT_USAGE,
            CliError::Core(_) | CliError::Io(_) => EXIT_DATA,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
