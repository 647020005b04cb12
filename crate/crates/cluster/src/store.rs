//! Job-scoped file storage and pipeline execution on one node.

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use leanstack_core::pipeline::{self, ExecContext, Stage};
use leanstack_core::tukubai::{MemoryBudget, SortOptions};

use crate::error::{from_core, ClusterError, Result};
use crate::protocol::OkBody;

/// Names one distributed invocation. Every file a job creates on a node
/// lives under that node's directory for the job.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct JobId(String);

impl JobId {
    pub fn new(id: impl Into<String>) -> Result<JobId> {
        let id = id.into();
        let ok = !id.is_empty()
            && id.len() <= 64
            && id.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'-' || b == b'_');
        if ok {
            Ok(JobId(id))
        } else {
            Err(ClusterError::InvalidJob(id))
        }
    }

    /// A fresh id, unique within this process and very likely across hosts.
    pub fn generate() -> JobId {
        static COUNTER: AtomicU64 = AtomicU64::new(0);
        let nanos = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_nanos() as u64)
            .unwrap_or(0);
        let n = COUNTER.fetch_add(1, Ordering::Relaxed);
        JobId(format!("job-{nanos:x}-{:x}-{n}", std::process::id()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Remote half of a pipeline run: stages plus the job-relative input and
/// output paths. Inputs are read back to back as one stream.
#[derive(Clone, Debug)]
pub struct PipelineSpec {
    pub stages: Vec<Stage>,
    pub inputs: Vec<String>,
    pub output: String,
    pub mem_budget: Option<MemoryBudget>,
}

impl PipelineSpec {
    pub fn new(stages: Vec<Stage>, inputs: Vec<String>, output: impl Into<String>) -> Result<Self> {
        if stages.is_empty() {
            return Err(ClusterError::Core(leanstack_core::Error::InvalidArgument(
                "pipeline has no stages".into(),
            )));
        }
        Ok(PipelineSpec {
            stages,
            inputs,
            output: output.into(),
            mem_budget: None,
        })
    }
}

/// Validates a job-relative path: non-empty, relative, no `..`.
pub fn relative_path(path: &str) -> Result<PathBuf> {
    let p = Path::new(path);
    let clean = !path.is_empty() && p.components().all(|c| matches!(c, Component::Normal(_) | Component::CurDir));
    if clean && p.components().any(|c| matches!(c, Component::Normal(_))) {
        Ok(p.to_path_buf())
    } else {
        Err(ClusterError::InvalidPath(path.to_string()))
    }
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Clone, Debug)]
pub struct JobStore {
    root: PathBuf,
    budget: MemoryBudget,
}

impl JobStore {
    /// Opens (creating if needed) a store rooted at `root`.
    pub fn open(root: impl Into<PathBuf>) -> Result<JobStore> {
        let root = root.into();
        fs::create_dir_all(root.join("jobs"))?;
        fs::create_dir_all(root.join("scratch"))?;
        Ok(JobStore {
            root,
            budget: MemoryBudget::DEFAULT,
        })
    }

    pub fn with_budget(mut self, budget: MemoryBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn job_dir(&self, job: &JobId) -> PathBuf {
        self.root.join("jobs").join(job.as_str())
    }

    pub fn path(&self, job: &JobId, rel: &str) -> Result<PathBuf> {
        Ok(self.job_dir(job).join(relative_path(rel)?))
    }

    /// Writes `path` through a temporary file so readers never see a
    /// partial result.
    fn write_atomic<F>(&self, job: &JobId, rel: &str, fill: F) -> Result<OkBody>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<OkBody>,
    {
        let dest = self.path(job, rel)?;
        fs::create_dir_all(dest.parent().expect("job paths have a parent"))?;
        let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let tmp = dest.with_file_name(format!(
            ".{}.part{n}",
            dest.file_name().unwrap().to_string_lossy()
        ));
        let result = (|| {
            let mut w = BufWriter::with_capacity(256 * 1024, File::create(&tmp)?);
            let done = fill(&mut w)?;
            w.flush()?;
            drop(w);
            fs::rename(&tmp, &dest)?;
            Ok(done)
        })();
        if result.is_err() {
            let _ = fs::remove_file(&tmp);
        }
        result
    }

    pub fn put(&self, job: &JobId, rel: &str, data: &mut dyn Read) -> Result<u64> {
        let done = self.write_atomic(job, rel, |w| {
            let bytes = io::copy(data, w).map_err(ClusterError::from_io)?;
            Ok(OkBody {
                bytes,
                ..OkBody::default()
            })
        })?;
        Ok(done.bytes)
    }

    pub fn open_file(&self, job: &JobId, rel: &str) -> Result<File> {
        let path = self.path(job, rel)?;
        File::open(&path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => ClusterError::Remote(format!("no such file `{rel}`")),
            _ => e.into(),
        })
    }

    pub fn exec(&self, job: &JobId, spec: &PipelineSpec) -> Result<OkBody> {
        if spec.stages.is_empty() {
            return Err(ClusterError::Core(leanstack_core::Error::InvalidArgument(
                "pipeline has no stages".into(),
            )));
        }
        for stage in &spec.stages {
            for f in stage.file_args() {
                relative_path(f)?;
            }
        }
        let start = Instant::now();
        let mut input: Box<dyn Read> = Box::new(io::empty());
        for rel in &spec.inputs {
            input = Box::new(input.chain(self.open_file(job, rel)?));
        }
        let ctx = ExecContext {
            sort: SortOptions::default()
                .with_budget(spec.mem_budget.unwrap_or(self.budget))
                .with_scratch_dir(self.root.join("scratch")),
            base_dir: Some(self.job_dir(job)),
        };
        let input = Box::new(BufReader::with_capacity(256 * 1024, input));
        self.write_atomic(job, &spec.output, |w| {
            let records = pipeline::run(&spec.stages, input, w, &ctx).map_err(from_core)?;
            Ok(OkBody {
                bytes: 0,
                records,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
    }

    /// Removes one file, or the whole job directory when `rel` is `None`.
    /// Missing targets are not an error.
    pub fn delete(&self, job: &JobId, rel: Option<&str>) -> Result<()> {
        let r = match rel {
            Some(rel) => fs::remove_file(self.path(job, rel)?),
            None => fs::remove_dir_all(self.job_dir(job)),
        };
        match r {
            Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e.into()),
            _ => Ok(()),
        }
    }
}
