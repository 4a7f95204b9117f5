use thiserror::Error;

/// Errors raised anywhere in the simulator.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameters, shapes, or configuration. `path` names the offending
    /// key or argument.
    #[error("configuration error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// A derivative or state component became non-finite during integration.
    #[error("integration fault at t={time}: unit {unit}, item {item} is {value}")]
    Integration {
        time: f64,
        unit: usize,
        item: usize,
        value: f64,
    },

    #[error("malformed snapshot: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. } => 2,
            Error::Integration { .. } => 3,
            Error::Format(_) | Error::Io(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
