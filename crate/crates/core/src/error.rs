use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
///
/// The CLI maps these onto exit codes: [`Error::Numeric`] and
/// [`Error::RankDeficient`] are numeric failures, [`Error::Io`] and
/// [`Error::Parse`] are I/O failures, everything else is a usage error.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("enumeration infeasible: {needed} subsets exceed the budget of {budget}")]
    Infeasible { needed: u128, budget: u128 },
    #[error("{path}: line {line}, field {field}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        field: usize,
        msg: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, expected: impl Into<String>, got: impl Into<String>) -> Error {
    Error::Shape {
        op,
        expected: expected.into(),
        got: got.into(),
    }
}
