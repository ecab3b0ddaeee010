use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the workbench.
///
/// The harness maps these onto process exit codes: `Shape`, `Param`, `Config`
/// and `State` are usage-level problems, `Data` and `Io` are input problems and
/// `Numeric` signals a non-finite or out-of-tolerance computation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Shape {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("state error: {0}")]
    State(String),
    #[error("data error{}: {message}", offset.map(|o| format!(" at byte {o}")).unwrap_or_default())]
    Data { message: String, offset: Option<usize> },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, left: (usize, usize), right: (usize, usize)) -> Self {
        Error::Shape {
            op,
            left_rows: left.0,
            left_cols: left.1,
            right_rows: right.0,
            right_cols: right.1,
        }
    }

    pub(crate) fn data(message: impl Into<String>) -> Self {
        Error::Data {
            message: message.into(),
            offset: None,
        }
    }

    pub(crate) fn data_at(message: impl Into<String>, offset: usize) -> Self {
        Error::Data {
            message: message.into(),
            offset: Some(offset),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
