use thiserror::Error;

use crate::kvstore::Key;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("table `{0}` already exists")]
    TableExists(String),

    #[error("table `{0}` does not exist")]
    NoSuchTable(String),

    #[error("table `{0}` was dropped")]
    TableDropped(String),

    #[error("invalid table configuration for `{table}`: {reason}")]
    InvalidConfig { table: String, reason: String },

    #[error("split row {0:?} already exists")]
    DuplicateSplit(String),

    #[error("unknown semiring `{0}`")]
    UnknownSemiring(String),

    #[error("unknown iterator `{0}`")]
    UnknownIterator(String),

    #[error("invalid iterator option `{key}`: {reason}")]
    InvalidOption { key: String, reason: String },

    #[error("subset expression error at byte {position}: {reason}")]
    SubsetParse { position: usize, reason: String },

    #[error("cannot decode value {value:?} at key {key}")]
    BadValue { key: Key, value: String },

    #[error("sorted-source contract violated: {0}")]
    ContractViolation(String),

    #[error("row {row:?} of `{table}` exceeds the in-memory row cap of {cap} entries")]
    RowTooLarge { table: String, row: String, cap: usize },

    #[error("write to `{table}` aborted after {written} entries: {source}")]
    WriteAborted {
        table: String,
        written: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("target table `{table}` needs a `{semiring}` combiner at scan, flush and compact scopes")]
    MissingCombiner { table: String, semiring: String },

    #[error("invalid resume token: {0}")]
    BadResumeToken(String),

    #[error("partition count {p} out of range 1..={n}")]
    PartitionOutOfRange { p: usize, n: usize },

    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("table `{0}` is empty")]
    EmptyTable(String),

    #[error("no split divides `{0}` into two non-empty tablets")]
    NoEvenSplit(String),

    #[error("dump format error on line {line}: {reason}")]
    Dump { line: usize, reason: String },

    #[error("results diverge: {0}")]
    Divergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn option(key: &str, reason: impl Into<String>) -> Self {
        Error::InvalidOption {
            key: key.to_string(),
            reason: reason.into(),
        }
    }
}
