use thiserror::Error;

use crate::curriculum::CurriculumError;
use crate::metrics::MetricsError;
use crate::model::ModelError;
use crate::patchify::PatchError;
use crate::raster::RasterError;
use crate::tables::TableError;
use crate::targets::TargetError;
use crate::tokenizer::TokenizerError;

/// Crate-wide error. `exit_code` maps it onto the CLI's exit statuses.
#[derive(Debug, Error)]
pub enum Error {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// 2 usage, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) | Error::Curriculum(_) => 2,
            Error::Metrics(MetricsError::UnknownMetric(_)) => 2,
            Error::Model(ModelError::NumericalFailure { .. }) => 4,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
