use thiserror::Error;

/// Crate-wide error type. The three variants map onto the CLI exit codes
/// (1 = config, 2 = data, 3 = numerical), so every fallible operation in the
/// library must pick the category that describes the root cause.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration (bad tolerances, negative
    /// geometry, malformed config files, ...).
    #[error("config: {0}")]
    Config(String),

    /// Problems with measurement or curve data (malformed CSV, non-monotone
    /// times, out-of-range queries, ...).
    #[error("data: {0}")]
    Data(String),

    /// Numerical failure (singular system, non-finite values, optimizer
    /// breakdown, ...).
    #[error("numerical: {0}")]
    Numerical(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code the CLI reports for this error category.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Data(_) => 2,
            Error::Numerical(_) => 3,
        }
    }

    /// Short machine-readable category tag used in diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Data(_) => "data",
            Error::Numerical(_) => "numerical",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
