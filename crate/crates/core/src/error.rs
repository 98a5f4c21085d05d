use std::io;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cosine distance is undefined for a zero vector")]
    ZeroVector,
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("index contains no records")]
    EmptyIndex,
    #[error("node index {index} out of range for {count} nodes")]
    IndexOutOfRange { index: usize, count: usize },
    #[error("duplicate record id {0}")]
    DuplicateId(u64),
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("neighbor {0} has no label")]
    UnlabeledData(u64),
    #[error("neighbor {0} has no response value")]
    MissingResponse(u64),
    #[error("bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("file is truncated")]
    TruncatedFile,
    #[error("source has {source_lines} lines but target has {target_lines}")]
    LineCountMismatch { source_lines: usize, target_lines: usize },
    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersionMismatch { expected: u16, found: u16 },
    #[error("checksum mismatch: file is corrupted or truncated")]
    ChecksumMismatch,
    #[error("malformed data: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        match err.into_kind() {
            csv::ErrorKind::Io(e) => Error::Io(e),
            other => Error::Parse(format!("{other:?}")),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
