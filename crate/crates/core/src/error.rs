use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),

    /// Failure while writing or reading sort spill files.
    #[error("scratch storage: {0}")]
    Scratch(#[source] io::Error),

    #[error("invalid record: {0}")]
    InvalidRecord(&'static str),

    #[error("invalid key expression `{expr}`: {reason}")]
    KeySpec { expr: String, reason: &'static str },

    #[error("record has {width} fields but the key needs column {needed}")]
    TooNarrow { width: usize, needed: usize },

    #[error("column {column} out of range for record of width {width}")]
    ColumnOutOfRange { column: usize, width: usize },

    #[error("not a decimal number: `{0}`")]
    NotNumeric(String),

    #[error("decimal value out of range")]
    Overflow,

    #[error("not sorted on key")]
    Unsorted,

    /// Wraps an error with the 1-based input stream and record number where it occurred.
    #[error("input {stream}, record {record}: {source}")]
    At {
        stream: usize,
        record: u64,
        #[source]
        source: Box<Error>,
    },

    /// An error raised inside one stage of a pipeline.
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{0}")]
    InvalidArgument(String),
}

impl Error {
    /// Attaches a position. An existing position is replaced, which lets a
    /// merge re-label errors coming from its per-input readers.
    pub(crate) fn at(self, stream: usize, record: u64) -> Error {
        match self {
            Error::At { source, .. } => Error::At {
                stream,
                record,
                source,
            },
            e => Error::At {
                stream,
                record,
                source: Box::new(e),
            },
        }
    }

    /// Returns `(stream, record)` when the error is tied to a position in an input.
    pub fn position(&self) -> Option<(usize, u64)> {
        match self {
            Error::At { stream, record, .. } => Some((*stream, *record)),
            Error::Stage { source, .. } => source.position(),
            _ => None,
        }
    }

    /// The innermost error, skipping positional wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::At { source, .. } | Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
