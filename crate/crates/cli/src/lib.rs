//! Experiment harness: configuration, manifests, artifacts and subcommands.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod commands;
pub mod config;
pub mod output;
pub mod plot;

use slowfast::Error;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Core(#[from] Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 1: invalid input or failed validation, 2: usage, 3: numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Config(_) | CliError::Failed(_) => 1,
            CliError::Core(e) => match e {
                Error::BlowUp { .. } | Error::Divergence(_) | Error::IllConditioned { .. } | Error::Quadrature(_) => 3,
                _ => 1,
            },
            CliError::Io(_) => 3,
        }
    }
}
