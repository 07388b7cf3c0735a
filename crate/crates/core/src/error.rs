use std::path::PathBuf;

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no unique stationary distribution after {iterations} iterations")]
    NoUniqueStationary { iterations: usize },

    #[error("no analytic conditional expectation for {0}; request the Monte Carlo estimator")]
    UnsupportedAnalytic(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("parameter unobservable over the horizon (gram lambda_min = {lambda_min:e})")]
    UnobservableHorizon { lambda_min: f64 },

    #[error("precondition failed: {0}")]
    PreconditionFailed(String),

    #[error("config error{}: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config { line: Option<usize>, message: String },

    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
