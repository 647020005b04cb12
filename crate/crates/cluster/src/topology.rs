use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{ClusterError, Result};

/// The leader's view of the cluster.
///
/// Config file format, one setting per line, `#` starts a comment:
///
/// ```text
/// worker = 10.0.0.2:7070
/// worker = 10.0.0.3:7070
/// leader_participates = false
/// leader_root = /var/lib/leanstack
/// ```
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClusterTopology {
    pub workers: Vec<String>,
    pub leader_participates: bool,
    /// Data root for the leader's own share when it participates.
    pub leader_root: Option<PathBuf>,
}

impl ClusterTopology {
    pub fn new(workers: Vec<String>) -> Result<Self> {
        if workers.is_empty() {
            return Err(ClusterError::EmptyCluster);
        }
        Ok(ClusterTopology {
            workers,
            leader_participates: false,
            leader_root: None,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        fs::read_to_string(path)?.parse()
    }
}

fn check_endpoint(s: &str) -> bool {
    match s.rsplit_once(':') {
        Some((host, port)) => !host.is_empty() && port.parse::<u16>().is_ok(),
        None => false,
    }
}

impl FromStr for ClusterTopology {
    type Err = ClusterError;

    fn from_str(text: &str) -> Result<Self> {
        let mut workers = Vec::new();
        let mut leader_participates = false;
        let mut leader_root = None;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| ClusterError::Config {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (name, value) = line.split_once('=').ok_or_else(|| bad("expected `name = value`"))?;
            let value = value.trim();
            match name.trim() {
                "worker" if check_endpoint(value) => workers.push(value.to_string()),
                "worker" => return Err(bad("worker must be HOST:PORT")),
                "leader_participates" => {
                    leader_participates = value.parse().map_err(|_| bad("expected true or false"))?
                }
                "leader_root" => leader_root = Some(PathBuf::from(value)),
                other => return Err(bad(&format!("unknown setting `{other}`"))),
            }
        }
        if workers.is_empty() {
            return Err(ClusterError::EmptyCluster);
        }
        Ok(ClusterTopology {
            workers,
            leader_participates,
            leader_root,
        })
    }
}
