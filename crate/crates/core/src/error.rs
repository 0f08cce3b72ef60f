use std::path::PathBuf;

use thiserror::Error;

use crate::sweep::SweepResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),

    #[error("invalid step size h = {0}")]
    InvalidStep(f64),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid settings: {0}")]
    InvalidSettings(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("degenerate population: N = {0}")]
    DegeneratePopulation(f64),

    #[error("control value {0} outside [0, 1)")]
    ControlOutOfRange(f64),

    #[error("non-finite state at t = {t}{}", .node.map(|n| format!(" (node {n})")).unwrap_or_default())]
    IntegrationFailure { t: f64, node: Option<usize> },

    #[error("adaptive integration exceeded {max_steps} steps at t = {t}")]
    StepLimit { max_steps: usize, t: f64 },

    #[error("adaptive step size underflow at t = {t}")]
    StepUnderflow { t: f64 },

    #[error("sweep iteration {iteration}: {source}")]
    SweepFailure {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("sweep did not converge after {iterations} iterations (margin {margin:e})")]
    NotConverged {
        iterations: usize,
        margin: f64,
        result: Box<SweepResult>,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 invalid input, 3 numerical failure, 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_)
            | Error::InvalidStep(_)
            | Error::InvalidParams(_)
            | Error::InvalidState(_)
            | Error::InvalidSettings(_)
            | Error::DimensionMismatch { .. }
            | Error::GridMismatch(_)
            | Error::ControlOutOfRange(_)
            | Error::Config(_) => 2,
            Error::DegeneratePopulation(_)
            | Error::IntegrationFailure { .. }
            | Error::StepLimit { .. }
            | Error::StepUnderflow { .. }
            | Error::SweepFailure { .. }
            | Error::NotConverged { .. } => 3,
            Error::Io { .. } | Error::Format { .. } => 4,
        }
    }

    /// Short machine-readable tag for the diagnostic line.
    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "invalid-config",
            3 => "numerical-failure",
            _ => "io",
        }
    }
}
