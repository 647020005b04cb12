//! The text record: one line of single-space separated, non-empty fields.

use std::fmt;
use std::io::{self, BufRead, Write};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Record {
    line: String,
}

/// Checks the stored-record invariants on a line without its terminator.
pub fn validate_line(line: &str) -> Result<()> {
    let reason = if line.is_empty() {
        "empty line"
    } else if line.contains('\n') {
        "embedded newline"
    } else if line.starts_with(' ') || line.ends_with(' ') {
        "leading or trailing space"
    } else if line.contains("  ") {
        "empty field"
    } else {
        return Ok(());
    };
    Err(Error::InvalidRecord(reason))
}

impl Record {
    /// Parses one line; a single trailing `\n` is accepted and dropped.
    pub fn parse(line: &str) -> Result<Self> {
        let line = line.strip_suffix('\n').unwrap_or(line);
        validate_line(line)?;
        Ok(Record {
            line: line.to_string(),
        })
    }

    pub fn from_fields<I, S>(fields: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut line = String::new();
        for (i, f) in fields.into_iter().enumerate() {
            let f = f.as_ref();
            if f.is_empty() || f.contains([' ', '\n']) {
                return Err(Error::InvalidRecord("field is empty or contains a separator"));
            }
            if i > 0 {
                line.push(' ');
            }
            line.push_str(f);
        }
        if line.is_empty() {
            return Err(Error::InvalidRecord("empty line"));
        }
        Ok(Record { line })
    }

    /// Wraps a line that is already known to be valid.
    pub(crate) fn from_line_unchecked(line: String) -> Self {
        debug_assert!(validate_line(&line).is_ok(), "{line:?}");
        Record { line }
    }

    pub fn as_str(&self) -> &str {
        &self.line
    }

    pub fn into_string(self) -> String {
        self.line
    }

    pub fn fields(&self) -> std::str::Split<'_, char> {
        self.line.split(' ')
    }

    pub fn width(&self) -> usize {
        memchr::memchr_iter(b' ', self.line.as_bytes()).count() + 1
    }

    /// 1-based field access.
    pub fn field(&self, index: usize) -> Option<&str> {
        index.checked_sub(1).and_then(|i| self.fields().nth(i))
    }

    /// Writes the record followed by its newline terminator.
    pub fn write_to<W: Write + ?Sized>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(self.line.as_bytes())?;
        w.write_all(b"\n")
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.line)
    }
}

impl fmt::Debug for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.line)
    }
}

impl std::str::FromStr for Record {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Record::parse(s)
    }
}

/// Selects and reorders columns (1-based, duplicates allowed).
pub fn project(record: &Record, columns: &[usize]) -> Result<Record> {
    if columns.is_empty() {
        return Err(Error::InvalidArgument("no columns to project".into()));
    }
    let fields: Vec<&str> = record.fields().collect();
    let mut line = String::with_capacity(record.line.len());
    for (i, &c) in columns.iter().enumerate() {
        let f = c
            .checked_sub(1)
            .and_then(|c| fields.get(c))
            .ok_or(Error::ColumnOutOfRange {
                column: c,
                width: fields.len(),
            })?;
        if i > 0 {
            line.push(' ');
        }
        line.push_str(f);
    }
    Ok(Record { line })
}

/// Streams records out of a line-oriented reader.
///
/// Errors carry the 1-based record number. The iterator stops after the
/// first error.
pub struct RecordReader<R> {
    inner: R,
    buf: String,
    line: u64,
    validate: bool,
    done: bool,
}

impl<R: BufRead> RecordReader<R> {
    pub fn new(inner: R) -> Self {
        RecordReader {
            inner,
            buf: String::new(),
            line: 0,
            validate: true,
            done: false,
        }
    }

    /// Skips per-line validation. Only for files this crate wrote itself.
    pub(crate) fn trusted(inner: R) -> Self {
        RecordReader {
            validate: false,
            ..RecordReader::new(inner)
        }
    }

    pub fn records_read(&self) -> u64 {
        self.line
    }
}

impl<R: BufRead> Iterator for RecordReader<R> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        self.buf.clear();
        let result = match self.inner.read_line(&mut self.buf) {
            Ok(0) => {
                self.done = true;
                return None;
            }
            Ok(_) => {
                self.line += 1;
                if self.buf.ends_with('\n') {
                    self.buf.pop();
                }
                let line = std::mem::take(&mut self.buf);
                if self.validate {
                    validate_line(&line).map(|_| Record { line })
                } else {
                    Ok(Record { line })
                }
            }
            Err(e) if e.kind() == io::ErrorKind::InvalidData => {
                self.line += 1;
                Err(Error::InvalidRecord("not valid UTF-8"))
            }
            Err(e) => Err(Error::Io(e)),
        };
        if result.is_err() {
            self.done = true;
        }
        Some(result.map_err(|e| e.at(1, self.line)))
    }
}

/// Writes every record of a stream, returning how many were written.
pub fn write_records<I, W>(records: I, out: &mut W) -> Result<u64>
where
    I: IntoIterator<Item = Result<Record>>,
    W: Write + ?Sized,
{
    let mut n = 0;
    for r in records {
        r?.write_to(out)?;
        n += 1;
    }
    Ok(n)
}
