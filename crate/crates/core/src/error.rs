use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("invalid boundary conditions: {0}")]
    Boundary(String),

    /// `line` is 1-based; 0 when the problem is not tied to one line.
    #[error("{}", located(*line, message))]
    Config { line: usize, message: String },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("topology extraction failed: {0}")]
    Topology(String),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    /// An input file that cannot be read.
    #[error("cannot read {}: {source}", path.display())]
    Input {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn located(line: usize, message: &str) -> String {
    if line == 0 {
        format!("config: {message}")
    } else {
        format!("config line {line}: {message}")
    }
}

impl Error {
    pub(crate) fn config(line: usize, message: impl Into<String>) -> Self {
        Error::Config {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn input(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Input {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status: 1 for bad input, 2 for numerical or runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Grid(_)
            | Error::Parameter(_)
            | Error::Boundary(_)
            | Error::Config { .. }
            | Error::Format { .. }
            | Error::Input { .. } => 1,
            Error::Solver(_) | Error::Topology(_) | Error::Optimizer(_) | Error::Io { .. } => 2,
        }
    }
}
