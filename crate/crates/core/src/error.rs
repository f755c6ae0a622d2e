use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("row {row}: expected {expected} fields, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}, column {column}: cannot parse {value:?} as a finite number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error("duplicate column name {0:?}")]
    DuplicateColumn(String),

    #[error("variable {0:?} not found")]
    UnknownVariable(String),

    #[error("malformed variable range {0:?}")]
    MalformedRange(String),

    #[error("variable range {0:?} mixes prefixes")]
    MismatchedPrefix(String),

    #[error("variable {0:?} appears in more than one role")]
    DuplicateRole(String),

    #[error("no {0} variables given")]
    EmptyRole(&'static str),

    #[error("no observations left after dropping rows with missing values")]
    NoObservations,

    #[error("variable {0:?} is constant and collides with the intercept")]
    ConstantColumn(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("input contains non-finite values")]
    NonFinite,

    #[error("matrix is singular or not positive definite (pivot {pivot})")]
    Singular { pivot: usize },

    #[error("design matrix is rank deficient (column {column})")]
    RankDeficient { column: usize },

    #[error("order condition fails: {instruments} instruments for {regressors} regressors")]
    OrderCondition {
        instruments: usize,
        regressors: usize,
    },

    #[error("invalid subset size k={k} for K={total} instruments")]
    InvalidSubsetSize { k: usize, total: usize },

    #[error("C({total},{k}) subsets exceed the enumeration limit of {limit}")]
    TooManySubsets {
        total: usize,
        k: usize,
        limit: usize,
    },

    #[error("estimation impossible: {0}")]
    EstimationImpossible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{0}")]
    Usage(String),
}

pub type Result<T> = std::result::Result<T, Error>;
