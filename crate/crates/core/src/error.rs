use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Coarse classification of failures, used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad caller input: argument out of range, wrong dimensions.
    Usage,
    /// Malformed or unusable data.
    Data,
    /// A numeric fitting step failed.
    Fit,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),
    #[error("degenerate feature `{name}`: {reason}")]
    DegenerateFeature { name: String, reason: String },
    #[error("unsupported model format: {0}")]
    Format(String),
    #[error("{step}: {source}")]
    Step {
        step: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("cell {cell}: {source}")]
    Cell {
        cell: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_step(self, step: &'static str) -> Error {
        Error::Step {
            step,
            source: Box::new(self),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidArgument(_) | Error::DimensionMismatch { .. } => ErrorKind::Usage,
            Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_)
            | Error::Data(_)
            | Error::DegenerateLabels(_)
            | Error::Format(_) => ErrorKind::Data,
            Error::InsufficientSamples(_) | Error::DegenerateFeature { .. } => ErrorKind::Fit,
            Error::Step { source, .. } | Error::Fold { source, .. } | Error::Cell { source, .. } => {
                source.kind()
            }
        }
    }
}

/// Tag the error of a fallible step with the step name.
pub(crate) trait StepContext<T> {
    fn step(self, step: &'static str) -> Result<T>;
}

impl<T> StepContext<T> for Result<T> {
    fn step(self, step: &'static str) -> Result<T> {
        self.map_err(|e| e.in_step(step))
    }
}
