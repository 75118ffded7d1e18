use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },
    #[error("{0}")]
    Domain(String),
    #[error("{0}")]
    ShapeMismatch(String),
    #[error("{0}")]
    Stride(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Range(String),
    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("{0}")]
    Graph(String),
    #[error("{0}")]
    DegenerateSeries(String),
    #[error("{0}")]
    LengthMismatch(String),
    #[error("{0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag used by the command line front end.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NotPositiveDefinite { .. } => "NotPositiveDefinite",
            Error::Domain(_) => "DomainError",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::Stride(_) => "StrideError",
            Error::Config(_) => "ConfigError",
            Error::Range(_) => "RangeError",
            Error::NonFiniteLoss { .. } => "NonFiniteLoss",
            Error::Graph(_) => "GraphError",
            Error::DegenerateSeries(_) => "DegenerateSeries",
            Error::LengthMismatch(_) => "LengthMismatch",
            Error::Parse(_) => "ParseError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub(crate) fn shape_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::ShapeMismatch(msg.into()))
}
