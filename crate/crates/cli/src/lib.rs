//! Configuration files, experiment presets and CSV output for the
//! `irsa-lab` command-line tool.

pub mod config;
pub mod output;
pub mod preset;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Sim(#[from] irsa_lab::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("unknown preset `{name}`; valid presets: {}", valid.join(", "))]
    UnknownPreset { name: String, valid: Vec<&'static str> },
}

pub type Result<T> = std::result::Result<T, CliError>;
