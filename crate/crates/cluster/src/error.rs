use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ClusterError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("cluster has no workers")]
    EmptyCluster,

    #[error("cluster config line {line}: {reason}")]
    Config { line: usize, reason: String },

    /// An operation failed on one node; `node` names it.
    #[error("{node}: {source}")]
    Node {
        node: String,
        #[source]
        source: Box<ClusterError>,
    },

    /// Error reported by a remote daemon.
    #[error("{0}")]
    Remote(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("invalid path `{0}`")]
    InvalidPath(String),

    #[error("invalid job id `{0}`")]
    InvalidJob(String),

    #[error("leader disk full while writing {}", path.display())]
    LeaderDiskFull {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Core(#[from] leanstack_core::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl ClusterError {
    pub fn on(self, node: impl Into<String>) -> ClusterError {
        match self {
            e @ ClusterError::Node { .. } => e,
            e => ClusterError::Node {
                node: node.into(),
                source: Box::new(e),
            },
        }
    }

    /// The node an error is attributed to, if any.
    pub fn node(&self) -> Option<&str> {
        match self {
            ClusterError::Node { node, .. } => Some(node),
            _ => None,
        }
    }

    /// Unwraps I/O errors that merely carry a cluster error across an
    /// `io::Read` boundary.
    pub(crate) fn from_io(e: io::Error) -> ClusterError {
        if e.get_ref().is_some_and(|inner| inner.is::<ClusterError>()) {
            *e.into_inner().unwrap().downcast::<ClusterError>().unwrap()
        } else {
            ClusterError::Io(e)
        }
    }
}

/// Maps core errors, recovering cluster errors that were carried through a
/// reader as I/O errors.
pub(crate) fn from_core(e: leanstack_core::Error) -> ClusterError {
    match e {
        leanstack_core::Error::Io(io) => ClusterError::from_io(io),
        e => ClusterError::Core(e),
    }
}
