//! Benchmark harness for leanstack: the grep, sort, wordcount, select,
//! join and aggregation workloads on a single-node oracle and on a
//! cluster, with timing reports, output digests and repetition
//! statistics.

use std::io;
use std::path::PathBuf;

use leanstack_cluster::ClusterError;
use thiserror::Error;

pub mod digest;
pub mod report;
pub mod run;
pub mod stats;
pub mod workload;

pub use digest::{canonicalize, digest_file, verify_agreement, Agreement};
pub use report::{compute_rate, read_report, save_report, verify_rows, Engine, ReportRow, RowAgreement, WorkloadReport};
pub use run::{load, run_workload, Executor, LoadedData, RunOptions};
pub use stats::{validate, ValidationSummary};
pub use workload::{OrderSensitivity, Workload, WorkloadKind};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{0}")]
    Invalid(String),

    #[error("cannot read {path}: {source}", path = .0.display(), source = .1)]
    Unreadable(PathBuf, #[source] io::Error),

    #[error("{workload} ({engine}): {source}")]
    Workload {
        workload: WorkloadKind,
        engine: Engine,
        #[source]
        source: Box<BenchError>,
    },

    #[error(transparent)]
    Cluster(#[from] ClusterError),

    #[error(transparent)]
    Core(leanstack_core::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl From<leanstack_core::Error> for BenchError {
    /// Recovers cluster errors that travelled through a core pipeline.
    fn from(e: leanstack_core::Error) -> Self {
        match e {
            leanstack_core::Error::Io(io) if io.get_ref().is_some_and(|i| i.is::<ClusterError>()) => {
                let inner = io.into_inner().expect("checked above");
                BenchError::Cluster(*inner.downcast::<ClusterError>().expect("checked above"))
            }
            e => BenchError::Core(e),
        }
    }
}
