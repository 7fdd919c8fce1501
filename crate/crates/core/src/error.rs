use thiserror::Error;

/// Errors raised by ingestion, validation and the solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("entry ({row}, {col}) is outside a {nrows}x{ncols} matrix")]
    IndexOutOfBounds {
        row: usize,
        col: usize,
        nrows: usize,
        ncols: usize,
    },

    #[error("duplicate entry ({row}, {col}) at lines {first_line} and {second_line}")]
    DuplicateEntry {
        row: usize,
        col: usize,
        first_line: usize,
        second_line: usize,
    },

    #[error("non-finite value at entry ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("singular ridge system: lambda is zero and component {component} has zero scale")]
    SingularRidge { component: usize },

    #[error("{axis} {index} has {count} observed entries, needs at least {required}")]
    DegenerateLine {
        axis: &'static str,
        index: usize,
        count: usize,
        required: usize,
    },

    #[error("{axis} {index} has zero spread after centering and cannot be scaled")]
    ZeroScale { axis: &'static str, index: usize },

    #[error("dense evaluation refused: {rows}x{cols} exceeds the test-scale limit of {limit} entries")]
    TooLarge { rows: usize, cols: usize, limit: usize },

    #[error("empty lambda sequence")]
    EmptyLambdaList,

    #[error("model bundle: {0}")]
    Bundle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn mismatch(context: &'static str, expected: impl ToString, found: impl ToString) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
