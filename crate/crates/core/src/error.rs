use std::path::PathBuf;

/// Errors produced anywhere in the pipeline.
///
/// Each variant maps onto a short category string (see [`Error::category`])
/// which the command-line front end prints as `error: <category>: <detail>`.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{0}")]
    Dimension(String),

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("{0}")]
    Contract(String),

    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("{0}")]
    Parameter(String),

    #[error("{0}")]
    Config(String),

    #[error("non-finite gradient for parameter `{param}`")]
    NanGradient { param: String },

    #[error("{0}")]
    Data(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn category(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NonFinite { .. } | Error::NanGradient { .. } => "numeric",
            Error::Contract(_) => "contract",
            Error::Format { .. } => "format",
            Error::Parameter(_) => "parameter",
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Io { .. } => "io",
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
