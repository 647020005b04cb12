//! Single-node record commands over standard input and output.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

use clap::Args;
use leanstack_core::pipeline::{self, ExecContext, Stage};
use leanstack_core::record::write_records;
use leanstack_core::tukubai::dmerge as merge;
use leanstack_core::{parse_key_spec, RecordReader};

use crate::{Failure, Global};

#[derive(Args, Debug)]
pub struct StageArgs {
    /// Key columns, e.g. `key=1`, `key=2/3` or `key=1@num@desc`.
    #[arg(long)]
    key: Option<String>,

    /// Columns to sum (sm2).
    #[arg(long)]
    sum: Option<String>,

    /// Key columns of the right-hand file (join).
    #[arg(long)]
    right_key: Option<String>,

    /// Read this file instead of standard input.
    #[arg(long, short)]
    input: Option<PathBuf>,

    /// Positional arguments, as in `count 1 1` or `sm2 1 1 2 2`.
    #[arg(allow_negative_numbers = true)]
    args: Vec<String>,
}

impl StageArgs {
    /// Positional arguments first, then any flag forms in stage order.
    fn words(&self) -> Vec<String> {
        let mut w = self.args.clone();
        w.extend(self.key.iter().cloned());
        w.extend(self.sum.iter().cloned());
        w.extend(self.right_key.iter().cloned());
        w
    }
}

#[derive(Args, Debug)]
pub struct DmergeArgs {
    #[arg(long)]
    key: String,

    /// Sorted input files; `-` reads standard input.
    #[arg(required = true)]
    files: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct PipelineArgs {
    /// Stages separated by `|`, e.g. `tokenize | msort key=1 | count 1 1`.
    pipeline: String,

    /// Read this file instead of standard input.
    #[arg(long, short)]
    input: Option<PathBuf>,
}

fn open_input(path: Option<&PathBuf>) -> Result<Box<dyn BufRead>, Failure> {
    match path {
        Some(p) if p.as_os_str() != "-" => {
            let f = File::open(p).map_err(|e| Failure::Failed(format!("{}: {e}", p.display())))?;
            Ok(Box::new(BufReader::with_capacity(256 * 1024, f)))
        }
        _ => Ok(Box::new(BufReader::with_capacity(256 * 1024, io::stdin()))),
    }
}

fn stdout() -> BufWriter<io::StdoutLock<'static>> {
    BufWriter::with_capacity(256 * 1024, io::stdout().lock())
}

fn run(g: &Global, stages: &[Stage], input: Option<&PathBuf>) -> Result<(), Failure> {
    let ctx = ExecContext {
        sort: g.sort_options()?,
        base_dir: None,
    };
    let input = open_input(input)?;
    let mut out = stdout();
    pipeline::run(stages, input, &mut out, &ctx)?;
    Ok(())
}

pub fn stage(g: &Global, name: &str, args: StageArgs) -> Result<(), Failure> {
    let stage = Stage::parse(name, &args.words()).map_err(Failure::usage)?;
    run(g, &[stage], args.input.as_ref())
}

pub fn pipeline(g: &Global, args: PipelineArgs) -> Result<(), Failure> {
    let stages = pipeline::parse_pipeline(&args.pipeline).map_err(Failure::usage)?;
    run(g, &stages, args.input.as_ref())
}

pub fn dmerge(args: DmergeArgs) -> Result<(), Failure> {
    let key = parse_key_spec(&args.key).map_err(Failure::usage)?;
    if args.files.iter().filter(|p| p.as_os_str() == "-").count() > 1 {
        return Err(Failure::Usage("standard input can be merged only once".into()));
    }
    let inputs = args
        .files
        .iter()
        .map(|p| open_input(Some(p)).map(RecordReader::new))
        .collect::<Result<Vec<_>, _>>()?;
    let mut out = stdout();
    write_records(merge(inputs, key), &mut out)?;
    out.flush()?;
    Ok(())
}
