//! Stage interpreter: turns `(command, args)` pairs into a chain of
//! streaming commands. The command line runs single stages through it;
//! worker daemons run whole remote pipelines.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::decimal::Decimal;
use crate::error::{Error, Result};
use crate::key::{parse_key_spec, KeyRange};
use crate::record::{project, write_records, Record, RecordReader};
use crate::tukubai::{self, SortOptions};

#[derive(Clone, Debug, PartialEq)]
pub enum Stage {
    Tokenize,
    Grep { needle: String },
    Msort { key: KeyRange },
    Count { key: KeyRange },
    Sm2 { key: KeyRange, sum: KeyRange },
    Lcnt,
    Select { column: usize, threshold: Decimal },
    Project { columns: Vec<usize> },
    /// Joins the stream (left) with a key-sorted file (right).
    Join {
        right: String,
        left_key: KeyRange,
        right_key: KeyRange,
    },
}

pub const STAGE_NAMES: &[&str] = &[
    "tokenize", "grep", "msort", "count", "sm2", "lcnt", "select", "self", "join",
];

fn usage(command: &str, expect: &str) -> Error {
    Error::InvalidArgument(format!("{command}: expected {expect}"))
}

fn column(command: &str, arg: &str) -> Result<usize> {
    match arg.parse::<usize>() {
        Ok(c) if c > 0 => Ok(c),
        _ => Err(Error::InvalidArgument(format!(
            "{command}: `{arg}` is not a column number"
        ))),
    }
}

fn span(command: &str, from: &str, to: &str) -> Result<KeyRange> {
    KeyRange::new(column(command, from)?, column(command, to)?)
}

impl Stage {
    /// Parses a stage from its command name and arguments. Column spans may
    /// be given positionally (`count 1 1`, `sm2 1 1 2 2`) or as key
    /// expressions (`count key=1`, `sm2 key=1 key=2`).
    pub fn parse<S: AsRef<str>>(command: &str, args: &[S]) -> Result<Stage> {
        let args: Vec<&str> = args.iter().map(AsRef::as_ref).collect();
        let stage = match (command, args.as_slice()) {
            ("tokenize", []) => Stage::Tokenize,
            ("tokenize", _) => return Err(usage(command, "no arguments")),
            ("lcnt", []) => Stage::Lcnt,
            ("lcnt", _) => return Err(usage(command, "no arguments")),
            ("grep", [needle]) => Stage::Grep {
                needle: needle.to_string(),
            },
            ("grep", _) => return Err(usage(command, "NEEDLE")),
            ("msort", [key]) => Stage::Msort {
                key: parse_key_spec(key)?,
            },
            ("msort", _) => return Err(usage(command, "key=FROM[/TO]")),
            ("count", [key]) => Stage::Count {
                key: parse_key_spec(key)?,
            },
            ("count", [from, to]) => Stage::Count {
                key: span(command, from, to)?,
            },
            ("count", _) => return Err(usage(command, "K1 K2 or key=FROM[/TO]")),
            ("sm2", [key, sum]) => Stage::Sm2 {
                key: parse_key_spec(key)?,
                sum: parse_key_spec(sum)?,
            },
            ("sm2", [k1, k2, d1, d2]) => Stage::Sm2 {
                key: span(command, k1, k2)?,
                sum: span(command, d1, d2)?,
            },
            ("sm2", _) => return Err(usage(command, "K1 K2 D1 D2")),
            ("select", [col, threshold]) => Stage::Select {
                column: column(command, col)?,
                threshold: threshold.parse()?,
            },
            ("select", _) => return Err(usage(command, "COLUMN THRESHOLD")),
            ("self", cols) if !cols.is_empty() => Stage::Project {
                columns: cols
                    .iter()
                    .map(|c| column(command, c))
                    .collect::<Result<_>>()?,
            },
            ("self", _) => return Err(usage(command, "one or more columns")),
            ("join", [right, lk, rk]) => Stage::Join {
                right: right.to_string(),
                left_key: parse_key_spec(lk)?,
                right_key: parse_key_spec(rk)?,
            },
            ("join", _) => return Err(usage(command, "RIGHT_FILE key=L key=R")),
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "unknown command `{command}`"
                )))
            }
        };
        if let Stage::Sm2 { key, sum } = &stage {
            if key.overlaps(sum) {
                return Err(Error::InvalidArgument(
                    "sm2: key and sum columns overlap".into(),
                ));
            }
        }
        Ok(stage)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Tokenize => "tokenize",
            Stage::Grep { .. } => "grep",
            Stage::Msort { .. } => "msort",
            Stage::Count { .. } => "count",
            Stage::Sm2 { .. } => "sm2",
            Stage::Lcnt => "lcnt",
            Stage::Select { .. } => "select",
            Stage::Project { .. } => "self",
            Stage::Join { .. } => "join",
        }
    }

    /// Stages that read raw text rather than records must come first.
    pub fn reads_text(&self) -> bool {
        matches!(self, Stage::Tokenize | Stage::Grep { .. })
    }

    /// The command name followed by its arguments, such that
    /// `Stage::parse(&w[0], &w[1..])` rebuilds the stage.
    pub fn words(&self) -> Vec<String> {
        match self {
            Stage::Grep { needle } => vec!["grep".into(), needle.clone()],
            s => s.to_string().split(' ').map(str::to_string).collect(),
        }
    }

    /// File paths named in the arguments, for callers that sandbox paths.
    pub fn file_args(&self) -> Vec<&str> {
        match self {
            Stage::Join { right, .. } => vec![right],
            _ => Vec::new(),
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Tokenize | Stage::Lcnt => f.write_str(self.name()),
            Stage::Grep { needle } => write!(f, "grep {needle}"),
            Stage::Msort { key } => write!(f, "msort {key}"),
            Stage::Count { key } => write!(f, "count {key}"),
            Stage::Sm2 { key, sum } => write!(f, "sm2 {key} {sum}"),
            Stage::Select { column, threshold } => write!(f, "select {column} {threshold}"),
            Stage::Project { columns } => {
                f.write_str("self")?;
                columns.iter().try_for_each(|c| write!(f, " {c}"))
            }
            Stage::Join {
                right,
                left_key,
                right_key,
            } => write!(f, "join {right} {left_key} {right_key}"),
        }
    }
}

/// Parses `tokenize | msort key=1 | count 1 1` into stages.
pub fn parse_pipeline(text: &str) -> Result<Vec<Stage>> {
    text.split('|')
        .map(|part| {
            let mut words = part.split_whitespace();
            let command = words
                .next()
                .ok_or_else(|| Error::InvalidArgument("empty pipeline stage".into()))?;
            let args: Vec<&str> = words.collect();
            Stage::parse(command, &args)
        })
        .collect()
}

#[derive(Clone, Debug, Default)]
pub struct ExecContext {
    pub sort: SortOptions,
    /// Directory that relative file arguments resolve against.
    pub base_dir: Option<PathBuf>,
}

impl ExecContext {
    fn resolve(&self, path: &str) -> PathBuf {
        match &self.base_dir {
            Some(base) => base.join(path),
            None => Path::new(path).to_path_buf(),
        }
    }
}

type Stream<'a> = Box<dyn Iterator<Item = Result<Record>> + 'a>;

fn tag(stage: &Stage, e: Error) -> Error {
    match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: stage.name().to_string(),
            source: Box::new(e),
        },
    }
}

fn tagged<'a>(stage: &Stage, s: impl Iterator<Item = Result<Record>> + 'a) -> Stream<'a> {
    let stage = stage.clone();
    Box::new(s.map(move |r| r.map_err(|e| tag(&stage, e))))
}

fn single(value: u64) -> Stream<'static> {
    Box::new(std::iter::once(Ok(Record::from_line_unchecked(
        value.to_string(),
    ))))
}

/// Builds the lazy record stream for `stages` over `input`.
pub fn build<'a>(
    stages: &[Stage],
    input: Box<dyn BufRead + 'a>,
    ctx: &ExecContext,
) -> Result<Stream<'a>> {
    let (mut stream, rest): (Stream<'a>, &[Stage]) = match stages.first() {
        Some(s @ Stage::Tokenize) => (tagged(s, tukubai::tokenize(input)), &stages[1..]),
        Some(s @ Stage::Grep { needle }) => (
            single(tukubai::grep_count(input, needle).map_err(|e| tag(s, e))?),
            &stages[1..],
        ),
        _ => (Box::new(RecordReader::new(input)), stages),
    };
    for stage in rest {
        let t = |e| tag(stage, e);
        stream = match stage {
            Stage::Tokenize | Stage::Grep { .. } => {
                return Err(Error::InvalidArgument(format!(
                    "{} must be the first stage",
                    stage.name()
                )))
            }
            Stage::Msort { key } => tagged(
                stage,
                tukubai::msort(stream, *key, &ctx.sort).map_err(t)?,
            ),
            Stage::Count { key } => tagged(stage, tukubai::count_by_key(stream, *key)),
            Stage::Sm2 { key, sum } => {
                tagged(stage, tukubai::sm2(stream, *key, *sum).map_err(t)?)
            }
            Stage::Lcnt => single(tukubai::lcnt(stream).map_err(t)?),
            Stage::Select { column, threshold } => tagged(
                stage,
                tukubai::select_rows(stream, *column, *threshold).map_err(t)?,
            ),
            Stage::Project { columns } => {
                let columns = columns.clone();
                tagged(
                    stage,
                    stream.map(move |r| r.and_then(|r| project(&r, &columns))),
                )
            }
            Stage::Join {
                right,
                left_key,
                right_key,
            } => {
                let file = File::open(ctx.resolve(right)).map_err(|e| t(e.into()))?;
                let right = RecordReader::new(BufReader::new(file));
                tagged(
                    stage,
                    tukubai::merge_join(stream, right, *left_key, *right_key).map_err(t)?,
                )
            }
        };
    }
    Ok(stream)
}

/// Runs `stages` from `input` to `output`, returning the number of records
/// written.
pub fn run<'a>(
    stages: &[Stage],
    input: Box<dyn BufRead + 'a>,
    output: &mut dyn Write,
    ctx: &ExecContext,
) -> Result<u64> {
    let n = write_records(build(stages, input, ctx)?, output)?;
    output.flush()?;
    Ok(n)
}
