//! Dataset generation and the benchmark driver.

use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Subcommand, ValueEnum};
use leanstack_bench::report::{reports_from_rows, save_report};
use leanstack_bench::run::{load, run_workload, Executor, RunOptions};
use leanstack_bench::stats::DEFAULT_CONFIDENCE;
use leanstack_bench::{read_report, validate, verify_rows, Engine, ReportRow, Workload};
use leanstack_core::datagen::{gen_tables, gen_text, Manifest, TableSpec, TextCorpusSpec};

use crate::{Failure, Global};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum GenKind {
    Text,
    Tables,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    kind: GenKind,

    /// Total bytes to generate.
    #[arg(long, value_parser = crate::parse_bytes)]
    bytes: u64,

    #[arg(long, env = "LEANSTACK_SEED", default_value_t = 0)]
    seed: u64,

    /// Output directory; the manifest is written there.
    #[arg(long, env = "LEANSTACK_OUT")]
    out: PathBuf,

    /// Target size of each text file.
    #[arg(long, value_parser = crate::parse_bytes)]
    file_bytes: Option<u64>,

    /// Files per table.
    #[arg(long)]
    files_per_table: Option<usize>,
}

pub fn gen(args: GenArgs) -> Result<(), Failure> {
    let manifest = match args.kind {
        GenKind::Text => {
            if args.files_per_table.is_some() {
                return Err(Failure::Usage("--files-per-table applies to tables".into()));
            }
            let mut spec = TextCorpusSpec::new(args.bytes, args.seed);
            if let Some(b) = args.file_bytes {
                spec = spec.with_file_bytes(b);
            }
            spec.validate().map_err(Failure::usage)?;
            gen_text(&spec, &args.out)?
        }
        GenKind::Tables => {
            if args.file_bytes.is_some() {
                return Err(Failure::Usage("--file-bytes applies to text".into()));
            }
            let mut spec = TableSpec::new(args.bytes, args.seed);
            if let Some(n) = args.files_per_table {
                spec = spec.with_files_per_table(n);
            }
            spec.validate().map_err(Failure::usage)?;
            gen_tables(&spec, &args.out)?
        }
    };
    println!("{}", manifest.manifest_path().display());
    Ok(())
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum EngineArg {
    Oracle,
    Distributed,
}

#[derive(Subcommand, Debug)]
pub enum BenchCommand {
    /// Run one workload and write a report.
    Run(RunArgs),
    /// Check that reports agree on output digests.
    Verify(VerifyArgs),
    /// Confidence intervals for the timings in a report.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// grep, sort, wordcount, select, join or aggregation.
    #[arg(long)]
    workload: String,

    /// Dataset manifest or the directory holding it.
    #[arg(long)]
    data: PathBuf,

    #[arg(long, value_enum, default_value = "oracle")]
    engine: EngineArg,

    #[arg(long, default_value_t = 3)]
    reps: usize,

    /// Report file.
    #[arg(long, env = "LEANSTACK_OUT")]
    out: PathBuf,

    /// Workload output file; defaults to the report path plus `.output`.
    #[arg(long)]
    result: Option<PathBuf>,

    /// Add to an existing report instead of replacing it.
    #[arg(long)]
    append: bool,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[arg(long, required = true, num_args = 1..)]
    reports: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[arg(long)]
    report: PathBuf,

    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    confidence: f64,
}

pub fn bench(g: &Global, cmd: BenchCommand) -> Result<(), Failure> {
    match cmd {
        BenchCommand::Run(a) => run(g, a),
        BenchCommand::Verify(a) => verify(a),
        BenchCommand::Validate(a) => validate_report(a),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(g: &Global, args: RunArgs) -> Result<(), Failure> {
    let w: Workload = args.workload.parse().map_err(Failure::usage)?;
    if args.reps == 0 {
        return Err(Failure::Usage("--reps must be at least 1".into()));
    }
    let manifest = Manifest::read(&args.data)?;
    let result = args.result.clone().unwrap_or_else(|| with_suffix(&args.out, ".output"));
    let work = tempfile_dir(g)?;
    let mut opts = RunOptions::new(work.path());
    opts.repetitions = args.reps;
    opts.sort = g.sort_options()?;

    let report = match args.engine {
        EngineArg::Oracle => run_workload(&w, &manifest, &Executor::Oracle, &result, &opts)?,
        EngineArg::Distributed => {
            let path = g
                .cluster
                .as_ref()
                .ok_or_else(|| Failure::Usage("--cluster is required for the distributed engine".into()))?;
            let cluster = leanstack_cluster::Cluster::new(&leanstack_cluster::ClusterTopology::load(path)?)?;
            let data = load(&cluster, &manifest, w.inputs())?;
            log::info!("loaded {} in {:.3}s", data.job, data.seconds);
            let exec = Executor::Distributed {
                cluster: &cluster,
                data: &data,
            };
            let r = run_workload(&w, &manifest, &exec, &result, &opts);
            if let Err(e) = cluster.delete_job(&data.job) {
                log::warn!("could not remove job {}: {e}", data.job);
            }
            r?
        }
    };

    let mut reports = Vec::new();
    if args.append && args.out.exists() {
        reports = reports_from_rows(&read_report(&args.out)?)?;
    }
    let line = format!(
        "{} {} {} bytes mean {:.3}s rate {:.0} B/s {}",
        report.workload, report.engine, report.input_bytes, report.wall_time, report.rate, report.output_digest
    );
    reports.push(report);
    save_report(&reports, &args.out)?;
    println!("{line}");
    Ok(())
}

fn tempfile_dir(g: &Global) -> Result<tempfile::TempDir, Failure> {
    let base = g.tmpdir.clone().unwrap_or_else(std::env::temp_dir);
    tempfile::Builder::new()
        .prefix("leanstack-bench-")
        .tempdir_in(&base)
        .map_err(|e| Failure::Failed(format!("{}: {e}", base.display())))
}

fn verify(args: VerifyArgs) -> Result<(), Failure> {
    let mut rows: Vec<ReportRow> = Vec::new();
    for p in &args.reports {
        rows.extend(read_report(p)?);
    }
    let mut out = io::stdout().lock();
    let mut disagree = Vec::new();
    for a in verify_rows(&rows) {
        let engines: Vec<String> = a.digests.iter().map(|(e, d)| format!("{e}={d}")).collect();
        let verdict = if a.agree { "agree" } else { "disagree" };
        writeln!(out, "{} {} {verdict} {}", a.workload, a.bytes, engines.join(" "))?;
        if !a.agree {
            disagree.push(format!("{} at {} bytes", a.workload, a.bytes));
        }
    }
    if disagree.is_empty() {
        Ok(())
    } else {
        Err(Failure::Failed(format!("outputs disagree for {}", disagree.join(", "))))
    }
}

fn validate_report(args: ValidateArgs) -> Result<(), Failure> {
    let rows = read_report(&args.report)?;
    type Group<'a> = ((String, Engine, u64), Vec<&'a ReportRow>);
    let mut groups: Vec<Group> = Vec::new();
    for r in &rows {
        let k = (r.workload.to_string(), r.engine, r.bytes);
        match groups.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(r),
            None => groups.push((k, vec![r])),
        }
    }
    let mut out = io::stdout().lock();
    writeln!(out, "workload engine bytes n seconds seconds_low seconds_high rate rate_low rate_high")?;
    for ((workload, engine, bytes), rs) in groups {
        if rs.len() < 2 {
            log::warn!("{workload} {engine} {bytes}: one repetition, no interval");
            continue;
        }
        let secs: Vec<f64> = rs.iter().map(|r| r.seconds).collect();
        let rates: Vec<f64> = rs.iter().map(|r| r.rate).collect();
        let t = validate(&secs, args.confidence).map_err(Failure::usage)?;
        let r = validate(&rates, args.confidence).map_err(Failure::usage)?;
        writeln!(
            out,
            "{workload} {engine} {bytes} {} {:.6} {:.6} {:.6} {:.2} {:.2} {:.2}",
            t.n, t.mean, t.ci_low, t.ci_high, r.mean, r.ci_low, r.ci_high
        )?;
    }
    Ok(())
}
