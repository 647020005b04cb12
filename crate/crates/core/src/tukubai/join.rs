//! Inner sort-merge join.

use std::cmp::Ordering;
use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::key::{compare_spans, KeyRange};
use crate::record::Record;

/// One side of the join: a key-sorted stream with one record of lookahead.
struct Side<I> {
    iter: I,
    key: KeyRange,
    stream: usize,
    seen: u64,
    head: Option<Record>,
}

impl<I: Iterator<Item = Result<Record>>> Side<I> {
    fn fetch(&mut self) -> Result<Option<Record>> {
        match self.iter.next() {
            None => Ok(None),
            Some(r) => {
                self.seen += 1;
                let at = |e: Error| e.at(self.stream, self.seen);
                let r = r.map_err(at)?;
                self.key.check(r.as_str()).map_err(at)?;
                Ok(Some(r))
            }
        }
    }

    /// Moves past the head, verifying the next record does not sort before it.
    fn advance(&mut self) -> Result<Option<Record>> {
        let next = self.fetch()?;
        if let (Some(n), Some(h)) = (&next, &self.head) {
            if self.key.cmp_lines(n.as_str(), h.as_str()) == Ordering::Less {
                return Err(Error::Unsorted.at(self.stream, self.seen));
            }
        }
        Ok(std::mem::replace(&mut self.head, next))
    }
}

pub struct MergeJoin<L, R> {
    left: Side<L>,
    right: Side<R>,
    out: VecDeque<Record>,
    started: bool,
    done: bool,
}

/// Joins `left` and `right` on equal keys. Each output record is the left
/// record followed by the right record's non-key fields; output follows key
/// order, left-major within a key.
pub fn merge_join<L, R>(
    left: L,
    right: R,
    left_key: KeyRange,
    right_key: KeyRange,
) -> Result<MergeJoin<L::IntoIter, R::IntoIter>>
where
    L: IntoIterator<Item = Result<Record>>,
    R: IntoIterator<Item = Result<Record>>,
{
    if left_key.len() != right_key.len() {
        return Err(Error::InvalidArgument(format!(
            "join keys differ in width: {left_key} vs {right_key}"
        )));
    }
    if (left_key.mode(), left_key.direction()) != (right_key.mode(), right_key.direction()) {
        return Err(Error::InvalidArgument(format!(
            "join keys differ in mode or direction: {left_key} vs {right_key}"
        )));
    }
    Ok(MergeJoin {
        left: Side {
            iter: left.into_iter(),
            key: left_key,
            stream: 1,
            seen: 0,
            head: None,
        },
        right: Side {
            iter: right.into_iter(),
            key: right_key,
            stream: 2,
            seen: 0,
            head: None,
        },
        out: VecDeque::new(),
        started: false,
        done: false,
    })
}

fn joined(l: &Record, r: &Record, right_key: &KeyRange) -> Record {
    let mut line = l.as_str().to_string();
    for (i, f) in r.fields().enumerate() {
        if !right_key.contains(i + 1) {
            line.push(' ');
            line.push_str(f);
        }
    }
    Record::from_line_unchecked(line)
}

impl<L, R> MergeJoin<L, R>
where
    L: Iterator<Item = Result<Record>>,
    R: Iterator<Item = Result<Record>>,
{
    fn cmp_heads(&self, l: &Record, r: &Record) -> Ordering {
        compare_spans(l.as_str(), &self.left.key, r.as_str(), &self.right.key)
    }

    /// Produces the next batch of joined records into `out`. Returns false
    /// once either side is exhausted.
    fn fill(&mut self) -> Result<bool> {
        if !self.started {
            self.started = true;
            self.left.head = self.left.fetch()?;
            self.right.head = self.right.fetch()?;
        }
        loop {
            let (Some(l), Some(r)) = (&self.left.head, &self.right.head) else {
                return Ok(false);
            };
            match self.cmp_heads(l, r) {
                Ordering::Less => {
                    self.left.advance()?;
                }
                Ordering::Greater => {
                    self.right.advance()?;
                }
                Ordering::Equal => {
                    let first_left = l.clone();
                    let mut group = Vec::new();
                    while let Some(r) = &self.right.head {
                        if self.cmp_heads(&first_left, r) != Ordering::Equal {
                            break;
                        }
                        group.push(self.right.advance()?.unwrap());
                    }
                    while let Some(l) = &self.left.head {
                        if self.cmp_heads(l, &group[0]) != Ordering::Equal {
                            break;
                        }
                        let l = self.left.advance()?.unwrap();
                        self.out
                            .extend(group.iter().map(|r| joined(&l, r, &self.right.key)));
                    }
                    return Ok(true);
                }
            }
        }
    }
}

impl<L, R> Iterator for MergeJoin<L, R>
where
    L: Iterator<Item = Result<Record>>,
    R: Iterator<Item = Result<Record>>,
{
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(r) = self.out.pop_front() {
                return Some(Ok(r));
            }
            if self.done {
                return None;
            }
            match self.fill() {
                Ok(true) => {}
                Ok(false) => self.done = true,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            }
        }
    }
}
