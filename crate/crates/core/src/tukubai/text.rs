use std::collections::VecDeque;
use std::io::{self, BufRead};

use memchr::memmem;

use crate::error::{Error, Result};
use crate::record::Record;

/// Splits free text into one single-field record per whitespace-delimited
/// word. Runs of whitespace never produce empty records.
pub struct Tokenize<R> {
    reader: R,
    line: String,
    pending: VecDeque<Record>,
    lineno: u64,
    done: bool,
}

pub fn tokenize<R: BufRead>(reader: R) -> Tokenize<R> {
    Tokenize {
        reader,
        line: String::new(),
        pending: VecDeque::new(),
        lineno: 0,
        done: false,
    }
}

impl<R: BufRead> Iterator for Tokenize<R> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(r) = self.pending.pop_front() {
                return Some(Ok(r));
            }
            if self.done {
                return None;
            }
            self.line.clear();
            match self.reader.read_line(&mut self.line) {
                Ok(0) => self.done = true,
                Ok(_) => {
                    self.lineno += 1;
                    self.pending.extend(
                        self.line
                            .split_whitespace()
                            .map(|w| Record::from_line_unchecked(w.to_string())),
                    );
                }
                Err(e) => {
                    self.done = true;
                    self.lineno += 1;
                    let e = if e.kind() == io::ErrorKind::InvalidData {
                        Error::InvalidRecord("not valid UTF-8")
                    } else {
                        Error::Io(e)
                    };
                    return Some(Err(e.at(1, self.lineno)));
                }
            }
        }
    }
}

/// Counts non-overlapping, left-to-right occurrences of `needle`. Matching
/// is per line, so occurrences never span a line break.
pub fn grep_count<R: BufRead>(mut reader: R, needle: &str) -> Result<u64> {
    if needle.is_empty() {
        return Err(Error::InvalidArgument("grep needle must not be empty".into()));
    }
    if needle.contains('\n') {
        return Err(Error::InvalidArgument(
            "grep needle must not contain a newline".into(),
        ));
    }
    let finder = memmem::Finder::new(needle.as_bytes());
    let mut buf = Vec::new();
    let mut total = 0;
    loop {
        buf.clear();
        if reader.read_until(b'\n', &mut buf)? == 0 {
            return Ok(total);
        }
        total += finder.find_iter(&buf).count() as u64;
    }
}
