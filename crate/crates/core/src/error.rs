use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series did not converge after {terms} terms (partial sum {partial_sum:e})")]
    NonConvergence { partial_sum: f64, terms: usize },

    #[error("unsupported parameters: {0}")]
    UnsupportedParameter(String),

    #[error("no steady state: lambda = {lambda} >= mu = {mu}")]
    NoSteadyState { lambda: f64, mu: f64 },

    #[error("insufficient data: got {got}, need at least {need}")]
    InsufficientData { got: usize, need: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("ill-conditioned regression: {0}")]
    IllConditioned(String),

    #[error("empty sample")]
    EmptySample,

    #[error("Laplace inversion diverged at t = {t}")]
    InversionDiverged { t: f64 },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp { line: usize, timestamp: String },

    #[error("configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable tag, used for CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::NonConvergence { .. } => "non_convergence",
            Error::UnsupportedParameter(_) => "unsupported_parameter",
            Error::NoSteadyState { .. } => "no_steady_state",
            Error::InsufficientData { .. } => "insufficient_data",
            Error::DegenerateData(_) => "degenerate_data",
            Error::IllConditioned(_) => "ill_conditioned",
            Error::EmptySample => "empty_sample",
            Error::InversionDiverged { .. } => "inversion_diverged",
            Error::Parse { .. } => "parse",
            Error::DuplicateTimestamp { .. } => "duplicate_timestamp",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
