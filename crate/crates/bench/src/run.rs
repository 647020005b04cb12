//! Execution plans for the six workloads on both engines.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use leanstack_cluster::{Cluster, JobId, PipelineSpec};
use leanstack_core::datagen::{open_concatenated, DataKind, Manifest};
use leanstack_core::pipeline::{self, ExecContext, Stage};
use leanstack_core::record::write_records;
use leanstack_core::tukubai::{self, SortOptions};
use leanstack_core::{Error as CoreError, KeyRange, Record};

use crate::digest::digest_file;
use crate::report::{Engine, WorkloadReport};
use crate::workload::{Workload, WorkloadKind};
use crate::BenchError;

pub const DEFAULT_REPETITIONS: usize = 3;

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub repetitions: usize,
    /// Sort settings for the oracle engine and for leader-side steps.
    pub sort: SortOptions,
    /// Directory for oracle intermediates.
    pub work_dir: PathBuf,
}

impl RunOptions {
    pub fn new(work_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            repetitions: DEFAULT_REPETITIONS,
            sort: SortOptions::default(),
            work_dir: work_dir.into(),
        }
    }
}

/// A dataset scattered over a cluster: every manifest file is split across
/// all participants under `data/<file name>` in one job.
#[derive(Clone, Debug)]
pub struct LoadedData {
    pub job: JobId,
    files: HashMap<&'static str, Vec<String>>,
    /// Bytes per data kind.
    pub bytes: HashMap<&'static str, u64>,
    /// Wall time of the scatter.
    pub seconds: f64,
}

fn kind_key(kind: DataKind) -> &'static str {
    match kind {
        DataKind::Text => "text",
        DataKind::Item => "item",
        DataKind::Order => "order",
    }
}

impl LoadedData {
    pub fn remote_files(&self, kind: DataKind) -> Vec<String> {
        self.files.get(kind_key(kind)).cloned().unwrap_or_default()
    }

    fn require(&self, kind: DataKind) -> Result<Vec<String>, BenchError> {
        match self.remote_files(kind) {
            f if f.is_empty() => Err(BenchError::Invalid(format!("no {} files loaded in job {}", kind_key(kind), self.job))),
            f => Ok(f),
        }
    }
}

/// Scatters the manifest's files of the given kinds.
pub fn load(cluster: &Cluster, manifest: &Manifest, kinds: &[DataKind]) -> Result<LoadedData, BenchError> {
    let job = JobId::generate();
    let start = Instant::now();
    let mut files = HashMap::new();
    let mut bytes = HashMap::new();
    for &kind in kinds {
        let mut names = Vec::new();
        for e in manifest.of_kind(kind) {
            let remote = format!("data/{}", e.path);
            cluster.distr_distr(&job, &manifest.path_of(e), &remote)?;
            names.push(remote);
        }
        files.insert(kind_key(kind), names);
        bytes.insert(kind_key(kind), manifest.bytes_of(kind));
    }
    Ok(LoadedData {
        job,
        files,
        bytes,
        seconds: start.elapsed().as_secs_f64(),
    })
}

pub enum Executor<'a> {
    Oracle,
    Distributed { cluster: &'a Cluster, data: &'a LoadedData },
}

impl Executor<'_> {
    pub fn engine(&self) -> Engine {
        match self {
            Executor::Oracle => Engine::Oracle,
            Executor::Distributed { .. } => Engine::Distributed,
        }
    }
}

pub fn input_bytes(w: &Workload, manifest: &Manifest) -> u64 {
    w.inputs().iter().map(|&k| manifest.bytes_of(k)).sum()
}

/// Runs `w` `opts.repetitions` times, writing its output to `out`, and
/// reports timings and the output digest. Every repetition must produce
/// the same digest.
pub fn run_workload(
    w: &Workload,
    manifest: &Manifest,
    exec: &Executor,
    out: &Path,
    opts: &RunOptions,
) -> Result<WorkloadReport, BenchError> {
    let engine = exec.engine();
    let context = |e: BenchError| BenchError::Workload {
        workload: w.kind,
        engine,
        source: Box::new(e),
    };
    if opts.repetitions == 0 {
        return Err(BenchError::Invalid("repetitions must be at least 1".into()));
    }
    let mut times = Vec::with_capacity(opts.repetitions);
    let mut digest: Option<String> = None;
    for rep in 0..opts.repetitions {
        let start = Instant::now();
        match exec {
            Executor::Oracle => run_oracle(w, manifest, out, opts),
            Executor::Distributed { cluster, data } => run_distributed(w, cluster, data, out),
        }
        .map_err(context)?;
        times.push(start.elapsed().as_secs_f64().max(1e-9));
        let d = digest_file(out, w.order_sensitivity())?;
        match &digest {
            Some(prev) if *prev != d => {
                return Err(context(BenchError::Invalid(format!(
                    "repetition {} produced a different output digest",
                    rep + 1
                ))))
            }
            _ => digest = Some(d),
        }
    }
    WorkloadReport::new(w.kind, engine, input_bytes(w, manifest), digest.unwrap(), times)
}

fn stages(text: &str) -> Vec<Stage> {
    pipeline::parse_pipeline(text).expect("built-in plans parse")
}

/// The per-node (or whole-input, for the oracle) part of each plan.
fn local_stages(w: &Workload) -> Vec<Stage> {
    match w.kind {
        WorkloadKind::Grep => vec![Stage::Grep { needle: w.needle.clone() }],
        WorkloadKind::Sort => stages("tokenize | msort key=1"),
        WorkloadKind::Wordcount => stages("tokenize | msort key=1 | count 1 1 | sm2 1 1 2 2"),
        WorkloadKind::Select => vec![Stage::Select {
            column: w.select_column,
            threshold: w.threshold,
        }],
        WorkloadKind::Aggregation => vec![
            Stage::Msort { key: w.group },
            Stage::Sm2 { key: w.group, sum: w.sum },
        ],
        WorkloadKind::Join => unreachable!("join has a two-input plan"),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, BenchError> {
    Ok(BufWriter::with_capacity(256 * 1024, File::create(path)?))
}

fn run_oracle(w: &Workload, manifest: &Manifest, out: &Path, opts: &RunOptions) -> Result<(), BenchError> {
    let ctx = ExecContext {
        sort: opts.sort.clone(),
        base_dir: None,
    };
    let input = |kind| open_concatenated(manifest, kind);
    let mut dest = create(out)?;
    match w.kind {
        WorkloadKind::Join => {
            fs::create_dir_all(&opts.work_dir)?;
            let sorted_orders = opts.work_dir.join("oracle-orders.sorted");
            let mut tmp = create(&sorted_orders)?;
            pipeline::run(&[Stage::Msort { key: w.order_key }], input(DataKind::Order)?, &mut tmp, &ctx)?;
            drop(tmp);
            let plan = vec![
                Stage::Msort { key: w.item_key },
                Stage::Join {
                    right: sorted_orders.to_string_lossy().into_owned(),
                    left_key: w.item_key,
                    right_key: w.order_key,
                },
            ];
            let r = pipeline::run(&plan, input(DataKind::Item)?, &mut dest, &ctx);
            let _ = fs::remove_file(&sorted_orders);
            r?;
        }
        _ => {
            pipeline::run(&local_stages(w), input(w.inputs()[0])?, &mut dest, &ctx)?;
        }
    }
    dest.flush()?;
    Ok(())
}

/// Carries cluster errors through core iterators.
fn bridge(r: leanstack_cluster::Result<Record>) -> leanstack_core::Result<Record> {
    r.map_err(|e| CoreError::Io(io::Error::other(e)))
}

fn run_distributed(
    w: &Workload,
    cluster: &Cluster,
    data: &LoadedData,
    out: &Path,
) -> Result<(), BenchError> {
    let job = &data.job;
    let exec = |plan: Vec<Stage>, inputs: Vec<String>, output: &str| -> Result<(), BenchError> {
        let spec = PipelineSpec::new(plan, inputs, output)?;
        cluster.remote_exec(job, &spec)?;
        Ok(())
    };
    let mut dest = create(out)?;
    match w.kind {
        WorkloadKind::Grep => {
            exec(local_stages(w), data.require(DataKind::Text)?, "out/grep")?;
            let mut counts = Vec::new();
            cluster.gather_into(job, "out/grep", &mut counts)?;
            let mut total: u64 = 0;
            for line in String::from_utf8_lossy(&counts).lines() {
                total += line
                    .parse::<u64>()
                    .map_err(|_| BenchError::Invalid(format!("bad partial count `{line}`")))?;
            }
            writeln!(dest, "{total}")?;
        }
        WorkloadKind::Sort => {
            exec(local_stages(w), data.require(DataKind::Text)?, "out/sort")?;
            let key = KeyRange::column(1)?;
            write_records(cluster.distr_dmerge(job, key, "out/sort")?.map(bridge), &mut dest)?;
        }
        WorkloadKind::Wordcount | WorkloadKind::Aggregation => {
            let (input, remote) = match w.kind {
                WorkloadKind::Wordcount => (DataKind::Text, "out/wordcount"),
                _ => (DataKind::Item, "out/aggregation"),
            };
            exec(local_stages(w), data.require(input)?, remote)?;
            // Partial results are `key... sum`; merge on the key and re-sum.
            let width = match w.kind {
                WorkloadKind::Wordcount => 1,
                _ => w.group.len(),
            };
            let key = KeyRange::new(1, width)?;
            let sum = KeyRange::column(width + 1)?;
            let merged = cluster.distr_dmerge(job, key, remote)?.map(bridge);
            write_records(tukubai::sm2(merged, key, sum)?, &mut dest)?;
        }
        WorkloadKind::Select => {
            exec(local_stages(w), data.require(DataKind::Item)?, "out/select")?;
            cluster.gather_into(job, "out/select", &mut dest)?;
        }
        WorkloadKind::Join => {
            let counts_i = cluster.shuffle_by_key(job, &data.require(DataKind::Item)?, w.item_key, "shuffle/item")?;
            let counts_o = cluster.shuffle_by_key(job, &data.require(DataKind::Order)?, w.order_key, "shuffle/order")?;
            log::debug!("join shuffle: items {counts_i:?}, orders {counts_o:?}");
            exec(vec![Stage::Msort { key: w.order_key }], vec!["shuffle/order".into()], "shuffle/order.sorted")?;
            let plan = vec![
                Stage::Msort { key: w.item_key },
                Stage::Join {
                    right: "shuffle/order.sorted".into(),
                    left_key: w.item_key,
                    right_key: w.order_key,
                },
            ];
            exec(plan, vec!["shuffle/item".into()], "out/join")?;
            cluster.gather_into(job, "out/join", &mut dest)?;
        }
    }
    dest.flush()?;
    Ok(())
}
