use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A score or density evaluation produced a non-finite value.
    #[error("numerical failure at particle {index}: {detail}")]
    NumericalFailure { index: usize, detail: String },

    /// A finite-difference probe could not be evaluated.
    #[error("finite-difference probe failed on coordinate {coordinate}: {detail}")]
    ProbeFailure { coordinate: usize, detail: String },

    #[error("at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Attaches the control step at which the error occurred, unless one is
    /// already attached.
    pub fn at_step(self, step: usize) -> Self {
        if matches!(self, Error::AtStep { .. }) {
            return self;
        }
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
