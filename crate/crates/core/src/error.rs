use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Broad failure class, used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Io,
    Config,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    DimensionMismatch { op: &'static str, detail: String },

    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("{0} did not converge within its iteration cap")]
    ConvergenceFailure(&'static str),

    #[error("regularization weight must be positive, got {0}")]
    NonPositiveLambda(f64),

    #[error("column {column} is not representable by the remaining columns (relative residual {residual:e})")]
    InfeasibleColumn { column: usize, residual: f64 },

    #[error("column {column} is not unit norm (norm {norm})")]
    UnnormalizedColumn { column: usize, norm: f64 },

    #[error("infeasible subspace spec: {0}")]
    SpecInfeasible(String),

    #[error("label vectors differ in length ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid labeling: {0}")]
    InvalidLabels(String),

    #[error("invalid affinity: {0}")]
    InvalidAffinity(String),

    #[error("invalid cluster count k={k} for n={n} points")]
    InvalidClusterCount { k: usize, n: usize },

    #[error("parse error at line {line}, column {col}: {message}")]
    Parse {
        line: usize,
        col: usize,
        message: String,
    },

    #[error("ragged rows: line {line} has {found} fields, expected {expected}")]
    RaggedRows {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("non-finite entry at line {line}, column {col}")]
    NonFiniteEntry { line: usize, col: usize },

    #[error("dataset has no `#labels` row but the manifest requires one")]
    MissingLabels,

    #[error("dimension error: {0}")]
    DimensionError(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Io(_)
            | Error::Parse { .. }
            | Error::RaggedRows { .. }
            | Error::NonFiniteEntry { .. }
            | Error::MissingLabels => ErrorClass::Io,
            Error::Config(_)
            | Error::SpecInfeasible(_)
            | Error::NonPositiveLambda(_)
            | Error::InvalidClusterCount { .. }
            | Error::DimensionError(_) => ErrorClass::Config,
            _ => ErrorClass::Numeric,
        }
    }
}
