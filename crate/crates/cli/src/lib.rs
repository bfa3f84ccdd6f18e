//! Front end for `sliding-core`: scenario configs, trajectory files, audits
//! and plot data. The `sliding` binary is a thin wrapper around [`commands`].

pub mod commands;
pub mod config;
pub mod output;
pub mod plotdata;
pub mod scenarios;

use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_AUDIT_FAILED: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Input {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Input { .. } => EXIT_CONFIG,
            CliError::Output { .. } => EXIT_RUNTIME,
        }
    }
}

impl From<sliding_core::Error> for CliError {
    fn from(e: sliding_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
