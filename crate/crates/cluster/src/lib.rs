//! Leader/worker layer of leanstack.
//!
//! Worker daemons ([`WorkerDaemon`]) hold job-scoped files and run
//! pipelines on request. The leader drives them through [`Cluster`]:
//! scatter a file ([`Cluster::distr_distr`]), run a pipeline everywhere
//! ([`Cluster::remote_exec`]), merge sorted outputs as a stream
//! ([`Cluster::distr_dmerge`]), repartition by key
//! ([`Cluster::shuffle_by_key`]) and collect files ([`Cluster::gather`]).

pub mod cluster;
pub mod daemon;
pub mod error;
pub mod protocol;
pub mod store;
pub mod topology;

pub use cluster::{chunk_bounds, Chunk, Cluster, MergeStream, Node, NodeReport, Participant};
pub use daemon::{DaemonHandle, WorkerDaemon};
pub use error::{ClusterError, Result};
pub use store::{JobId, JobStore, PipelineSpec};
pub use topology::ClusterTopology;
