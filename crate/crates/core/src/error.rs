use thiserror::Error;

/// Errors raised anywhere in the diffusion map pipeline.
///
/// Each variant maps onto one process exit code of the command-line tool,
/// see [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("column `{column}` has zero spread; {what} is undefined")]
    DegenerateColumn { column: String, what: &'static str },

    #[error("isolated points without any kernel weight: {indices:?}")]
    IsolatedPoints { indices: Vec<usize> },

    #[error("neighborhood graph has {components} connected components; increase epsilon or the neighbor count, or allow disconnected graphs")]
    Disconnected { components: usize },

    #[error("eigensolver did not converge after {iterations} restarts; residual norms {residuals:?}")]
    NoConvergence { iterations: usize, residuals: Vec<f64> },

    #[error("decoder training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::DegenerateColumn { .. }
            | Error::Dimension(_)
            | Error::Format(_)
            | Error::NoConvergence { .. } => 2,
            Error::Disconnected { .. } | Error::IsolatedPoints { .. } => 3,
            Error::Divergence { .. } => 4,
            Error::Io(_) => 5,
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        if e.is_io_error() {
            match e.into_kind() {
                csv::ErrorKind::Io(io) => Error::Io(io),
                other => Error::Format(format!("{other:?}")),
            }
        } else {
            Error::Format(e.to_string())
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        if e.is_io() {
            Error::Io(e.into())
        } else {
            Error::Format(e.to_string())
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
