use std::path::PathBuf;

use thiserror::Error;

/// Unified error type for the whole library.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor operands do not fit together (wrong rank, extent, or element count).
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// A caller broke an API precondition that is not a shape problem.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// The Jacobian or score of a network contains NaN or infinity.
    #[error("non-finite values while scoring architecture {arch}")]
    NonFiniteScore { arch: String },

    /// An architecture string does not follow the token grammar.
    #[error("malformed architecture string at edge {edge}: {detail}")]
    ArchParse { edge: usize, detail: String },

    /// A data file is structurally invalid (bad magic, truncated, wrong length).
    #[error("{}: {detail}", path.display())]
    DataFormat { path: PathBuf, detail: String },

    /// A benchmark table row failed validation.
    #[error("{}:{line}: {detail}", path.display())]
    TableIngest { path: PathBuf, line: u64, detail: String },

    /// A lookup asked the benchmark table for an entry it does not hold.
    #[error("architecture {arch} has no entry for dataset {dataset}")]
    MissingEntry { arch: String, dataset: String },

    /// Rank correlation is not defined for the given inputs.
    #[error("rank correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    /// A search produced no usable candidate.
    #[error("search failed: {0}")]
    SearchFailed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
