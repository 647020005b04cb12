//! Worker daemon and cluster operations.

use std::io::{self, BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use leanstack_cluster::{Cluster, ClusterTopology, JobId, JobStore, PipelineSpec, WorkerDaemon};
use leanstack_core::pipeline::parse_pipeline;
use leanstack_core::record::write_records;
use leanstack_core::tukubai::MemoryBudget;
use leanstack_core::{parse_key_spec, Error as CoreError};

use crate::{Failure, Global};

#[derive(Args, Debug)]
pub struct WorkerArgs {
    /// Address to listen on.
    #[arg(long, env = "LEANSTACK_LISTEN", default_value = "127.0.0.1:7070")]
    listen: String,

    /// Directory holding job files and scratch space.
    #[arg(long, env = "LEANSTACK_ROOT")]
    root: PathBuf,
}

#[derive(Args, Debug)]
pub struct DistrArgs {
    /// Local file to split.
    file: PathBuf,
    /// Path of each node's chunk, relative to the job.
    dest: String,
}

#[derive(Args, Debug)]
pub struct ShellArgs {
    /// Stages separated by `|`.
    pipeline: String,

    /// Job-relative input files, concatenated in order.
    #[arg(long = "input", short, required = true)]
    inputs: Vec<String>,

    /// Job-relative output file.
    #[arg(long, short)]
    output: String,
}

#[derive(Args, Debug)]
pub struct DmergeArgs {
    #[arg(long)]
    key: String,

    /// Job-relative file, sorted on the key on every node.
    remote: String,

    /// Write here instead of standard output.
    #[arg(long, env = "LEANSTACK_OUT")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ShuffleArgs {
    #[arg(long)]
    key: String,

    /// Job-relative input files on every node.
    #[arg(required = true)]
    inputs: Vec<String>,

    /// Job-relative file receiving each node's partition.
    #[arg(long)]
    dest: String,
}

#[derive(Args, Debug)]
pub struct GatherArgs {
    /// Job-relative file on every node.
    remote: String,

    /// Write here instead of standard output.
    #[arg(long, env = "LEANSTACK_OUT")]
    out: Option<PathBuf>,
}

fn connect(g: &Global) -> Result<(Cluster, JobId), Failure> {
    let path = g
        .cluster
        .as_ref()
        .ok_or_else(|| Failure::Usage("--cluster is required".into()))?;
    let job = JobId::new(g.job.as_str()).map_err(Failure::usage)?;
    let topo = ClusterTopology::load(path)?;
    Ok((Cluster::new(&topo)?, job))
}

pub fn worker(g: &Global, args: WorkerArgs) -> Result<(), Failure> {
    let mut store = JobStore::open(&args.root)?;
    if let Some(b) = g.mem_budget {
        let b = usize::try_from(b).map_err(|_| Failure::Usage("--mem-budget is too large".into()))?;
        store = store.with_budget(MemoryBudget::new(b).map_err(Failure::usage)?);
    }
    let daemon = WorkerDaemon::bind(args.listen.as_str(), store)?;
    log::info!("listening on {}", daemon.local_addr());
    eprintln!("leanstack worker listening on {}", daemon.local_addr());
    daemon.serve();
    Ok(())
}

pub fn distr_distr(g: &Global, args: DistrArgs) -> Result<(), Failure> {
    let (cluster, job) = connect(g)?;
    let chunks = cluster.distr_distr(&job, &args.file, &args.dest)?;
    let mut out = io::stdout().lock();
    for (i, c) in chunks.iter().enumerate() {
        log::info!("{}: {} bytes at {}", c.node, c.bytes, c.offset);
        writeln!(out, "{} {} {}", i + 1, c.offset, c.bytes)?;
    }
    Ok(())
}

pub fn distr_shell(g: &Global, args: ShellArgs) -> Result<(), Failure> {
    let stages = parse_pipeline(&args.pipeline).map_err(Failure::usage)?;
    let mut spec = PipelineSpec::new(stages, args.inputs, args.output).map_err(Failure::usage)?;
    if let Some(b) = g.mem_budget {
        let b = usize::try_from(b).map_err(|_| Failure::Usage("--mem-budget is too large".into()))?;
        spec.mem_budget = Some(MemoryBudget::new(b).map_err(Failure::usage)?);
    }
    let (cluster, job) = connect(g)?;
    let reports = cluster.remote_exec(&job, &spec)?;
    let mut out = io::stdout().lock();
    for (i, r) in reports.iter().enumerate() {
        log::info!("{}: {} records in {:.3}s", r.node, r.records, r.seconds);
        writeln!(out, "{} {} {}", i + 1, r.records, r.seconds)?;
    }
    Ok(())
}

fn output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            std::fs::File::create(p).map_err(|e| Failure::Failed(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::with_capacity(256 * 1024, io::stdout().lock())),
    })
}

pub fn distr_dmerge(g: &Global, args: DmergeArgs) -> Result<(), Failure> {
    let key = parse_key_spec(&args.key).map_err(Failure::usage)?;
    let (cluster, job) = connect(g)?;
    let merged = cluster.distr_dmerge(&job, key, &args.remote)?;
    let mut out = output(args.out.as_ref())?;
    write_records(merged.map(|r| r.map_err(|e| CoreError::Io(io::Error::other(e)))), &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn shuffle(g: &Global, args: ShuffleArgs) -> Result<(), Failure> {
    let key = parse_key_spec(&args.key).map_err(Failure::usage)?;
    let (cluster, job) = connect(g)?;
    let counts = cluster.shuffle_by_key(&job, &args.inputs, key, &args.dest)?;
    let mut out = io::stdout().lock();
    for (i, n) in counts.iter().enumerate() {
        writeln!(out, "{} {n}", i + 1)?;
    }
    Ok(())
}

pub fn gather(g: &Global, args: GatherArgs) -> Result<(), Failure> {
    let (cluster, job) = connect(g)?;
    match &args.out {
        Some(p) => {
            cluster.gather(&job, &args.remote, p)?;
        }
        None => {
            let mut out = output(None)?;
            cluster.gather_into(&job, &args.remote, &mut out)?;
            out.flush()?;
        }
    }
    Ok(())
}

pub fn delete_job(g: &Global) -> Result<(), Failure> {
    let (cluster, job) = connect(g)?;
    cluster.delete_job(&job)?;
    Ok(())
}
