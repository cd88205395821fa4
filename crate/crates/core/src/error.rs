use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("vector has zero L2 norm")]
    ZeroVector,
    #[error("requested dimension {requested} is outside 1..={available}")]
    DimError { requested: usize, available: usize },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("input text is empty")]
    EmptyText,
    #[error("remote embedding service unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("parse error in {file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("ANN search requested but no HNSW graph was built")]
    AnnUnavailable,
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("hard negatives required but K == 0")]
    MissingNegatives,
    #[error("query has no indexable terms")]
    EmptyQuery,
    #[error("pool too small: need {needed} candidates, have {available}")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("source document `{0}` has no neighbouring pages")]
    NoNeighbors(String),
    #[error("dangling references: {}", .0.join(", "))]
    DanglingReference(Vec<String>),
    #[error("query sets differ between reports")]
    QueryMismatch,
    #[error("bad magic bytes in checkpoint container")]
    BadMagic,
    #[error("corrupt checkpoint header: {0}")]
    CorruptHeader(String),
    #[error("checkpoint data truncated: {0}")]
    TruncatedData(String),
    #[error("checkpoint schemas differ: {}", .0.join("; "))]
    SchemaMismatch(Vec<String>),
    #[error("tensor `{0}` has zero norm")]
    ZeroTensor(String),
    #[error("degenerate data: {0}")]
    DegenerateData(String),
    #[error("grid {rows}x{cols} does not cover {tokens} document tokens")]
    GridMismatch { rows: usize, cols: usize, tokens: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(file: impl Into<String>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            file: file.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Process exit code: 1 = usage, 2 = data, 3 = internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) => 1,
            Error::Internal(_) => 3,
            _ => 2,
        }
    }
}
