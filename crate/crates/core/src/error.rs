use thiserror::Error;

/// Errors raised by the fleet modelling library.
#[derive(Debug, Error)]
pub enum FleetError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: {message}")]
    BadRow {
        row: usize,
        column: String,
        message: String,
    },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("invalid argument `{name}`: {message}")]
    InvalidArgument { name: &'static str, message: String },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("task (k={k}, l={l}) is not part of the model layout")]
    UnknownTask { k: usize, l: usize },
    #[error("infeasible initialization: log posterior is -inf at the starting point (first offending parameter: {parameter})")]
    InfeasibleInit { parameter: String },
    #[error("log posterior evaluated to NaN at state {state:?}")]
    NanDensity { state: Vec<f64> },
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T, E = FleetError> = std::result::Result<T, E>;

pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> FleetError {
    FleetError::InvalidArgument {
        name,
        message: message.into(),
    }
}
