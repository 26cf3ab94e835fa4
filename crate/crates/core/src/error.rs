use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ambiguous parameters: {0}")]
    Ambiguous(String),
    #[error("{op}: outside regime ({detail}); rerun with force to override")]
    Regime { op: &'static str, detail: String },
    #[error("stability violated: {0}")]
    Stability(String),
    #[error("time step too coarse: {0}")]
    Resolution(String),
    #[error("spectrum table does not cover requested band: {0}")]
    Coverage(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 3,
            Error::Numerical(_) => 4,
            _ => 2,
        }
    }

    pub(crate) fn regime(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Regime {
            op,
            detail: detail.into(),
        }
    }
}
