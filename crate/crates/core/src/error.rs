use thiserror::Error;

use crate::annotations::ParseError;
use crate::boxgeom::BoxError;
use crate::degrade::DegradeError;
use crate::imaging::ImagingError;
use crate::iqa::IqaError;
use crate::pipeline::PipelineError;
use crate::selection::SelectionError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad input data or unreadable files.
    Input,
    /// Invalid configuration or flag values.
    Config,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Geometry(#[from] BoxError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
    #[error(transparent)]
    Iqa(#[from] IqaError),
    #[error(transparent)]
    Selection(#[from] SelectionError),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        let config = match self {
            Error::Geometry(_) => true,
            Error::Selection(e) => e.is_config(),
            Error::Degrade(e) => e.is_config(),
            Error::Pipeline(e) => e.is_config(),
            _ => false,
        };
        if config {
            ErrorKind::Config
        } else {
            ErrorKind::Input
        }
    }
}
