//! `msort`: stable merge sort with a memory budget.
//!
//! Records accumulate in an arena until the budget is reached. A full arena
//! is sorted and spilled to scratch storage as a sorted run; the runs are
//! then merged k ways, at most [`MAX_FAN_IN`] at a time. Input that fits
//! the budget never touches disk.

use std::cmp::Ordering;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use tempfile::TempDir;

use crate::error::{Error, Result};
use crate::key::{Direction, KeyRange, Mode};
use crate::record::{Record, RecordReader};
use crate::tukubai::merge::DMerge;

pub const MAX_FAN_IN: usize = 64;

const RUN_BUFFER: usize = 64 * 1024;

// Per-record bookkeeping charged against the budget besides the line bytes.
const SPAN_COST: usize = std::mem::size_of::<Entry>();

/// Upper bound on the bytes held in memory while sorting.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MemoryBudget(usize);

impl MemoryBudget {
    pub const DEFAULT: MemoryBudget = MemoryBudget(256 * 1024 * 1024);

    pub fn new(bytes: usize) -> Result<Self> {
        if bytes == 0 {
            return Err(Error::InvalidArgument("memory budget must be positive".into()));
        }
        Ok(MemoryBudget(bytes))
    }

    pub fn bytes(&self) -> usize {
        self.0
    }
}

impl Default for MemoryBudget {
    fn default() -> Self {
        Self::DEFAULT
    }
}

#[derive(Clone, Debug)]
pub struct SortOptions {
    pub budget: MemoryBudget,
    pub scratch_dir: PathBuf,
    pub fan_in: usize,
}

impl Default for SortOptions {
    fn default() -> Self {
        SortOptions {
            budget: MemoryBudget::default(),
            scratch_dir: std::env::temp_dir(),
            fan_in: MAX_FAN_IN,
        }
    }
}

impl SortOptions {
    pub fn with_budget(mut self, budget: MemoryBudget) -> Self {
        self.budget = budget;
        self
    }

    pub fn with_scratch_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.scratch_dir = dir.into();
        self
    }
}

/// A spilled file whose records are non-decreasing on `key`.
#[derive(Clone, Debug)]
pub struct SortedRun {
    pub path: PathBuf,
    pub key: KeyRange,
    pub count: u64,
}

/// A line in the arena plus the first key bytes, so most comparisons
/// never touch the line itself.
#[derive(Clone, Copy)]
struct Entry {
    prefix: u64,
    start: u32,
    /// Line length; the top bit marks a prefix that is the whole key.
    len: u32,
}

const EXACT: u32 = 1 << 31;

impl Entry {
    fn span(self) -> (u32, u32) {
        (self.start, self.len & !EXACT)
    }

    fn exact(self) -> bool {
        self.len & EXACT != 0
    }
}

/// First eight bytes of the first key column, zero padded, as a big-endian
/// integer (inverted for descending keys). Unequal prefixes order like the
/// full keys. Equal prefixes settle the comparison only when both are
/// exact: a single column of at most eight bytes with no NUL. Numeric keys
/// get no prefix.
fn key_prefix(key: &KeyRange, line: &str) -> (u64, bool) {
    if key.mode() != Mode::Lexicographic {
        return (0, false);
    }
    let first = key.columns(line).next().unwrap_or_default().as_bytes();
    let mut buf = [0u8; 8];
    let n = first.len().min(8);
    buf[..n].copy_from_slice(&first[..n]);
    let exact = key.len() == 1 && first.len() <= 8 && !first.contains(&0);
    let p = u64::from_be_bytes(buf);
    match key.direction() {
        Direction::Ascending => (p, exact),
        Direction::Descending => (!p, exact),
    }
}

struct Arena {
    data: String,
    spans: Vec<Entry>,
}

impl Arena {
    fn new() -> Self {
        Arena {
            data: String::new(),
            spans: Vec::new(),
        }
    }

    fn push(&mut self, line: &str, key: &KeyRange) {
        let start = self.data.len() as u32;
        self.data.push_str(line);
        let (prefix, exact) = key_prefix(key, line);
        self.spans.push(Entry {
            prefix,
            start,
            len: line.len() as u32 | if exact { EXACT } else { 0 },
        });
    }

    fn footprint(&self) -> usize {
        self.data.len() + self.spans.len() * SPAN_COST
    }

    fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    fn line(&self, (start, len): (u32, u32)) -> &str {
        &self.data[start as usize..(start + len) as usize]
    }

    fn sort(&mut self, key: &KeyRange) {
        let data = &self.data;
        let line = |(s, l): (u32, u32)| &data[s as usize..(s + l) as usize];
        // slice::sort_by is a stable merge sort.
        self.spans.sort_by(|a, b| match a.prefix.cmp(&b.prefix) {
            Ordering::Equal if a.exact() && b.exact() => Ordering::Equal,
            Ordering::Equal => key.cmp_lines(line(a.span()), line(b.span())),
            ord => ord,
        });
    }

    fn clear(&mut self) {
        self.data.clear();
        self.spans.clear();
    }
}

type RunReader = RecordReader<BufReader<File>>;

enum Inner {
    Memory { arena: Arena, pos: usize },
    Merge(DMerge<RunReader>),
}

/// The sorted output of [`msort`]. Scratch files live as long as the stream.
pub struct SortedStream {
    inner: Inner,
    runs: usize,
    _scratch: Option<TempDir>,
}

impl SortedStream {
    /// Number of runs spilled to scratch storage (0 for in-memory sorts).
    pub fn spilled_runs(&self) -> usize {
        self.runs
    }
}

impl Iterator for SortedStream {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        match &mut self.inner {
            Inner::Memory { arena, pos } => {
                let entry = *arena.spans.get(*pos)?;
                *pos += 1;
                Some(Ok(Record::from_line_unchecked(arena.line(entry.span()).to_string())))
            }
            Inner::Merge(m) => m.next().map(|r| r.map_err(scratch_error)),
        }
    }
}

fn scratch_error(e: Error) -> Error {
    match e {
        Error::Io(io) => Error::Scratch(io),
        Error::At { source, .. } if matches!(*source, Error::Io(_)) => scratch_error(*source),
        e => e,
    }
}

struct Spiller {
    dir: Option<TempDir>,
    base: PathBuf,
    runs: Vec<SortedRun>,
    key: KeyRange,
    next_id: usize,
}

impl Spiller {
    fn dir(&mut self) -> Result<&Path> {
        if self.dir.is_none() {
            let dir = tempfile::Builder::new()
                .prefix("msort-")
                .tempdir_in(&self.base)
                .map_err(Error::Scratch)?;
            self.dir = Some(dir);
        }
        Ok(self.dir.as_ref().unwrap().path())
    }

    fn create(&mut self) -> Result<(PathBuf, BufWriter<File>)> {
        let name = format!("run-{:06}", self.next_id);
        let path = self.dir()?.join(name);
        self.next_id += 1;
        let file = File::create(&path).map_err(Error::Scratch)?;
        Ok((path, BufWriter::with_capacity(RUN_BUFFER, file)))
    }

    fn spill(&mut self, arena: &mut Arena) -> Result<()> {
        arena.sort(&self.key);
        let (path, mut w) = self.create()?;
        for &entry in &arena.spans {
            w.write_all(arena.line(entry.span()).as_bytes())
                .and_then(|_| w.write_all(b"\n"))
                .map_err(Error::Scratch)?;
        }
        w.flush().map_err(Error::Scratch)?;
        self.runs.push(SortedRun {
            path,
            key: self.key,
            count: arena.spans.len() as u64,
        });
        arena.clear();
        Ok(())
    }

    fn open(runs: &[SortedRun]) -> Result<Vec<RunReader>> {
        runs.iter()
            .map(|run| {
                let f = File::open(&run.path).map_err(Error::Scratch)?;
                Ok(RecordReader::trusted(BufReader::with_capacity(RUN_BUFFER, f)))
            })
            .collect()
    }

    /// Merges consecutive groups of runs until at most `fan_in` remain.
    /// Grouping consecutive runs keeps the overall merge stable.
    fn reduce(&mut self, fan_in: usize) -> Result<()> {
        while self.runs.len() > fan_in {
            let old = std::mem::take(&mut self.runs);
            for group in old.chunks(fan_in) {
                if group.len() == 1 {
                    self.runs.push(group[0].clone());
                    continue;
                }
                let (path, mut w) = self.create()?;
                let mut count = 0;
                for r in DMerge::new(Self::open(group)?, self.key, false) {
                    r.map_err(scratch_error)?
                        .write_to(&mut w)
                        .map_err(Error::Scratch)?;
                    count += 1;
                }
                w.flush().map_err(Error::Scratch)?;
                for run in group {
                    let _ = std::fs::remove_file(&run.path);
                }
                self.runs.push(SortedRun {
                    path,
                    key: self.key,
                    count,
                });
            }
        }
        Ok(())
    }
}

/// Sorts a record stream on `key`, stably.
///
/// Every record is checked against the key as it arrives; the first record
/// that is too narrow (or non-numeric for a numeric key) fails the sort
/// with its position.
pub fn msort<I>(input: I, key: KeyRange, options: &SortOptions) -> Result<SortedStream>
where
    I: IntoIterator<Item = Result<Record>>,
{
    let budget = options.budget.bytes();
    let mut arena = Arena::new();
    let mut spiller = Spiller {
        dir: None,
        base: options.scratch_dir.clone(),
        runs: Vec::new(),
        key,
        next_id: 0,
    };
    for (n, r) in input.into_iter().enumerate() {
        let record_no = n as u64 + 1;
        let r = r?;
        key.check(r.as_str()).map_err(|e| e.at(1, record_no))?;
        arena.push(r.as_str(), &key);
        if arena.footprint() >= budget || arena.data.len() >= u32::MAX as usize / 2 {
            spiller.spill(&mut arena)?;
        }
    }
    if spiller.runs.is_empty() {
        arena.sort(&key);
        return Ok(SortedStream {
            inner: Inner::Memory { arena, pos: 0 },
            runs: 0,
            _scratch: None,
        });
    }
    if !arena.is_empty() {
        spiller.spill(&mut arena)?;
    }
    drop(arena);
    let spilled = spiller.runs.len();
    spiller.reduce(options.fan_in.clamp(2, MAX_FAN_IN))?;
    let readers = Spiller::open(&spiller.runs)?;
    Ok(SortedStream {
        inner: Inner::Merge(DMerge::new(readers, key, false)),
        runs: spilled,
        _scratch: spiller.dir,
    })
}
