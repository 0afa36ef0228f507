use std::path::PathBuf;

use loadnet_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {detail}", path.display())]
    Format { path: PathBuf, detail: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Data(String),

    #[error("missing domainness bundle for {} image(s): {}", .0.len(), .0.join(", "))]
    MissingBundles(Vec<String>),

    #[error("repeat {repeat}, stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        repeat: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    /// True when the root cause is a NaN or infinity in some computation.
    pub fn is_numeric(&self) -> bool {
        match self {
            Error::Tensor(TensorError::NonFinite { .. }) => true,
            Error::Stage { source, .. } => source.is_numeric(),
            _ => false,
        }
    }

    /// True for failures caused by input data (files, layouts, formats).
    pub fn is_data(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Format { .. } | Error::Data(_) | Error::MissingBundles(_) => true,
            Error::Stage { source, .. } => source.is_data(),
            _ => false,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str, repeat: usize) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str, repeat: usize) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            repeat,
            source: Box::new(e.into()),
        })
    }
}
