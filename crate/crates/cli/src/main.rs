//! `leanstack`: the record commands, worker daemon, cluster operations,
//! dataset generators and benchmark driver behind one binary.

mod bench;
mod cluster;
mod tools;

use std::fmt::Display;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use leanstack_core::tukubai::{MemoryBudget, SortOptions};

#[derive(Parser)]
#[command(name = "leanstack", version, about = "Composable record-processing commands and a small cluster runtime")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Global {
    /// Sort memory budget in bytes; K, M and G suffixes are binary multiples.
    #[arg(long, global = true, env = "LEANSTACK_MEM_BUDGET", value_parser = parse_bytes)]
    pub mem_budget: Option<u64>,

    /// Directory for sort spill files.
    #[arg(long, global = true, env = "LEANSTACK_TMPDIR")]
    pub tmpdir: Option<PathBuf>,

    /// Cluster config file (`worker = HOST:PORT` lines).
    #[arg(long, global = true, env = "LEANSTACK_CLUSTER")]
    pub cluster: Option<PathBuf>,

    /// Job namespace for cluster operations.
    #[arg(long, global = true, env = "LEANSTACK_JOB", default_value = "default")]
    pub job: String,
}

impl Global {
    pub fn sort_options(&self) -> Result<SortOptions, Failure> {
        let mut opts = SortOptions::default();
        if let Some(b) = self.mem_budget {
            let b = usize::try_from(b).map_err(|_| Failure::Usage("--mem-budget is too large".into()))?;
            opts = opts.with_budget(MemoryBudget::new(b).map_err(Failure::usage)?);
        }
        if let Some(dir) = &self.tmpdir {
            opts = opts.with_scratch_dir(dir);
        }
        Ok(opts)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Split text into one word per line.
    Tokenize(tools::StageArgs),
    /// Count occurrences of a substring.
    Grep(tools::StageArgs),
    /// Sort records on a key, spilling to disk past the memory budget.
    Msort(tools::StageArgs),
    /// Count records per key of sorted input (`count K1 K2`).
    Count(tools::StageArgs),
    /// Sum columns per key of sorted input (`sm2 K1 K2 D1 D2`).
    Sm2(tools::StageArgs),
    /// Count records.
    Lcnt(tools::StageArgs),
    /// Keep records whose column exceeds a threshold.
    Select(tools::StageArgs),
    /// Select and reorder columns.
    #[command(name = "self")]
    Project(tools::StageArgs),
    /// Join sorted input with a sorted file.
    Join(tools::StageArgs),
    /// Merge files that are each sorted on the key.
    Dmerge(tools::DmergeArgs),
    /// Run a `|`-separated pipeline of the commands above in one process.
    Pipeline(tools::PipelineArgs),
    /// Serve cluster requests.
    Worker(cluster::WorkerArgs),
    /// Split a local file across the cluster.
    DistrDistr(cluster::DistrArgs),
    /// Run a pipeline on every node over its local files.
    DistrShell(cluster::ShellArgs),
    /// Merge per-node sorted files into one sorted stream.
    DistrDmerge(cluster::DmergeArgs),
    /// Repartition files across the cluster by key hash.
    Shuffle(cluster::ShuffleArgs),
    /// Concatenate per-node files in node order.
    Gather(cluster::GatherArgs),
    /// Remove a job's files from every node.
    DeleteJob,
    /// Generate a synthetic dataset.
    Gen(bench::GenArgs),
    /// Run and check benchmarks.
    #[command(subcommand)]
    Bench(bench::BenchCommand),
}

/// Why an invocation failed. Usage errors exit with status 2, everything
/// else with 1.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Failed(String),
    /// Standard output was closed early; not worth a diagnostic.
    BrokenPipe,
}

impl Failure {
    pub fn usage(e: impl Display) -> Failure {
        Failure::Usage(e.to_string())
    }

    pub fn failed(e: impl Display) -> Failure {
        Failure::Failed(e.to_string())
    }
}

impl From<leanstack_core::Error> for Failure {
    fn from(e: leanstack_core::Error) -> Self {
        match e.root() {
            leanstack_core::Error::Io(io) if io.kind() == std::io::ErrorKind::BrokenPipe => Failure::BrokenPipe,
            _ => Failure::failed(e),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::BrokenPipe => Failure::BrokenPipe,
            _ => Failure::failed(e),
        }
    }
}

impl From<leanstack_cluster::ClusterError> for Failure {
    fn from(e: leanstack_cluster::ClusterError) -> Self {
        Failure::failed(e)
    }
}

impl From<leanstack_bench::BenchError> for Failure {
    fn from(e: leanstack_bench::BenchError) -> Self {
        Failure::failed(e)
    }
}

/// Parses a byte count with an optional K, M or G suffix.
fn parse_bytes(s: &str) -> Result<u64, String> {
    let (digits, shift) = match s.as_bytes().last() {
        Some(b'k' | b'K') => (&s[..s.len() - 1], 10),
        Some(b'm' | b'M') => (&s[..s.len() - 1], 20),
        Some(b'g' | b'G') => (&s[..s.len() - 1], 30),
        _ => (s, 0),
    };
    let n: u64 = digits.parse().map_err(|_| format!("`{s}` is not a byte count"))?;
    n.checked_mul(1 << shift).ok_or_else(|| format!("`{s}` is too large"))
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let g = &cli.global;
    match cli.command {
        Command::Tokenize(a) => tools::stage(g, "tokenize", a),
        Command::Grep(a) => tools::stage(g, "grep", a),
        Command::Msort(a) => tools::stage(g, "msort", a),
        Command::Count(a) => tools::stage(g, "count", a),
        Command::Sm2(a) => tools::stage(g, "sm2", a),
        Command::Lcnt(a) => tools::stage(g, "lcnt", a),
        Command::Select(a) => tools::stage(g, "select", a),
        Command::Project(a) => tools::stage(g, "self", a),
        Command::Join(a) => tools::stage(g, "join", a),
        Command::Dmerge(a) => tools::dmerge(a),
        Command::Pipeline(a) => tools::pipeline(g, a),
        Command::Worker(a) => cluster::worker(g, a),
        Command::DistrDistr(a) => cluster::distr_distr(g, a),
        Command::DistrShell(a) => cluster::distr_shell(g, a),
        Command::DistrDmerge(a) => cluster::distr_dmerge(g, a),
        Command::Shuffle(a) => cluster::shuffle(g, a),
        Command::Gather(a) => cluster::gather(g, a),
        Command::DeleteJob => cluster::delete_job(g),
        Command::Gen(a) => bench::gen(a),
        Command::Bench(c) => bench::bench(g, c),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LEANSTACK_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::BrokenPipe) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("leanstack: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Failed(msg)) => {
            eprintln!("leanstack: {msg}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn byte_counts() {
        assert_eq!(parse_bytes("1024"), Ok(1024));
        assert_eq!(parse_bytes("16M"), Ok(16 << 20));
        assert_eq!(parse_bytes("2k"), Ok(2048));
        assert!(parse_bytes("M").is_err());
        assert!(parse_bytes("99999999999G").is_err());
    }
}
