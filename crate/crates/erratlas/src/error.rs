use std::path::PathBuf;

use erratlas_core::annotations::AnnotationError;
use erratlas_core::metrics::MetricsError;
use erratlas_core::trend::FitError;
use erratlas_core::{CascadeError, EmbeddingError, IdError, LabelSpaceError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{file}:{line}: {message}")]
    Parse { file: String, line: u64, message: String },
    #[error("{file}: checksum mismatch (manifest {expected}, file {actual})")]
    ChecksumMismatch { file: String, expected: String, actual: String },
    #[error("{0}: no checksum recorded in the manifest")]
    MissingChecksum(String),
    #[error("manifest has no `{0}` entry")]
    MissingAsset(&'static str),
    #[error("{0}")]
    Validation(String),
    #[error(transparent)]
    Id(#[from] IdError),
    #[error(transparent)]
    LabelSpace(#[from] LabelSpaceError),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Cascade(#[from] CascadeError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(file: impl Into<String>, line: u64, message: impl std::fmt::Display) -> Self {
        Error::Parse { file: file.into(), line, message: message.to_string() }
    }
}
