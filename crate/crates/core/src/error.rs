use thiserror::Error;

/// Errors raised by model construction, geometry, inference and experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid model: {0}")]
    Model(String),
    #[error("config: {0}")]
    Config(String),
    #[error("task mismatch: {0}")]
    TaskMismatch(String),
    #[error("slope undefined: {usable} usable points in window, need at least 3")]
    UndefinedSlope { usable: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from bad user input rather than a failure during computation.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io(_) | Error::UndefinedSlope { .. })
    }

    /// Short stable code used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "E_INPUT",
            Error::Dimension(_) => "E_DIMENSION",
            Error::NonFinite(_) => "E_NONFINITE",
            Error::Model(_) => "E_MODEL",
            Error::Config(_) => "E_CONFIG",
            Error::TaskMismatch(_) => "E_TASK",
            Error::UndefinedSlope { .. } => "E_SLOPE",
            Error::Io(_) => "E_IO",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
