use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::binder::BinderError;
use crate::channel::ChannelError;
use crate::config::ConfigError;
use crate::engine::EngineError;
use crate::mode_selection::ModeSelectionError;
use crate::stack::StackError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Binder(#[from] BinderError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error(transparent)]
    ModeSelection(#[from] ModeSelectionError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("TTI {tti}: {source}")]
    AtTti { tti: u64, source: Box<Error> },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("CSV output: {0}")]
    Csv(#[from] csv::Error),
    #[error("the CQI range sweep needs a deterministic channel; set channel.shadowingStdDevDb = 0")]
    SweepRequiresDeterministicChannel,
    #[error("the CQI range sweep needs {0}")]
    SweepPrecondition(String),
}

impl Error {
    /// Whether the error is a problem with the inputs (scenario, CQI table,
    /// policy name) rather than a failure while running.
    pub fn is_config_error(&self) -> bool {
        match self {
            Error::Config(_) | Error::ModeSelection(_) => true,
            Error::Channel(ChannelError::MalformedTable { .. }) => true,
            Error::SweepRequiresDeterministicChannel | Error::SweepPrecondition(_) => true,
            Error::AtTti { source, .. } => source.is_config_error(),
            _ => false,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
