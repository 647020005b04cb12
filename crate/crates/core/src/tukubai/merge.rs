use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::key::KeyRange;
use crate::record::Record;

struct Head {
    record: Record,
    source: usize,
    key: KeyRange,
}

// BinaryHeap is a max-heap: invert so the smallest key, then the lowest
// input index, is on top.
impl Ord for Head {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .cmp_lines(other.record.as_str(), self.record.as_str())
            .then_with(|| other.source.cmp(&self.source))
    }
}

impl PartialOrd for Head {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for Head {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Head {}

struct Input<I> {
    iter: I,
    count: u64,
}

/// Streaming k-way merge of individually sorted inputs.
///
/// Ties are broken by input index. Each input's order is verified as it is
/// consumed; a violation is reported with the 1-based input index and
/// record number.
pub struct DMerge<I> {
    inputs: Vec<Input<I>>,
    heap: BinaryHeap<Head>,
    key: KeyRange,
    started: bool,
    done: bool,
    verify: bool,
}

/// Merges sorted record streams on `key`.
pub fn dmerge<I>(inputs: Vec<I>, key: KeyRange) -> DMerge<I>
where
    I: Iterator<Item = Result<Record>>,
{
    DMerge::new(inputs, key, true)
}

impl<I> DMerge<I>
where
    I: Iterator<Item = Result<Record>>,
{
    pub(crate) fn new(inputs: Vec<I>, key: KeyRange, verify: bool) -> Self {
        DMerge {
            heap: BinaryHeap::with_capacity(inputs.len()),
            inputs: inputs
                .into_iter()
                .map(|iter| Input { iter, count: 0 })
                .collect(),
            key,
            started: false,
            done: false,
            verify,
        }
    }

    fn pull(&mut self, idx: usize) -> Result<Option<Record>> {
        let input = &mut self.inputs[idx];
        match input.iter.next() {
            None => Ok(None),
            Some(r) => {
                input.count += 1;
                let at = |e: Error| e.at(idx + 1, input.count);
                let r = r.map_err(at)?;
                if self.verify {
                    self.key.check(r.as_str()).map_err(at)?;
                }
                Ok(Some(r))
            }
        }
    }

    fn step(&mut self) -> Result<Option<Record>> {
        if !self.started {
            self.started = true;
            for idx in 0..self.inputs.len() {
                if let Some(record) = self.pull(idx)? {
                    self.heap.push(Head {
                        record,
                        source: idx,
                        key: self.key,
                    });
                }
            }
        }
        let Some(head) = self.heap.pop() else {
            return Ok(None);
        };
        if let Some(next) = self.pull(head.source)? {
            if self.verify
                && self.key.cmp_lines(next.as_str(), head.record.as_str()) == Ordering::Less
            {
                let count = self.inputs[head.source].count;
                return Err(Error::Unsorted.at(head.source + 1, count));
            }
            self.heap.push(Head {
                record: next,
                source: head.source,
                key: self.key,
            });
        }
        Ok(Some(head.record))
    }
}

impl<I> Iterator for DMerge<I>
where
    I: Iterator<Item = Result<Record>>,
{
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = self.step().transpose();
        if !matches!(out, Some(Ok(_))) {
            self.done = true;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::key::parse_key_spec;

    fn stream(lines: &[&str]) -> std::vec::IntoIter<Result<Record>> {
        lines
            .iter()
            .map(|l| Record::parse(l))
            .collect::<Vec<_>>()
            .into_iter()
    }

    fn merged(inputs: Vec<&[&str]>, key: &str) -> Result<Vec<String>> {
        let inputs = inputs.into_iter().map(stream).collect();
        dmerge(inputs, parse_key_spec(key).unwrap())
            .map(|r| r.map(Record::into_string))
            .collect()
    }

    #[test]
    fn examples() {
        assert_eq!(
            merged(vec![&["a", "c"], &["b"]], "key=1").unwrap(),
            ["a", "b", "c"]
        );
        assert_eq!(merged(vec![&["a", "b"], &[]], "key=1").unwrap(), ["a", "b"]);
        assert_eq!(merged(vec![], "key=1").unwrap(), Vec::<String>::new());
    }

    #[test]
    fn unsorted_input_reports_stream_and_record() {
        let err = merged(vec![&["a"], &["c", "b"]], "key=1").unwrap_err();
        assert_eq!(err.position(), Some((2, 2)));
        assert!(matches!(err.root(), Error::Unsorted));
    }

    #[test]
    fn ties_follow_input_order() {
        let out = merged(vec![&["k 2"], &["k 1"], &["j 3", "k 0"]], "key=1").unwrap();
        assert_eq!(out, ["j 3", "k 2", "k 1", "k 0"]);
    }

    #[test]
    fn narrow_records_are_rejected_with_position() {
        let err = merged(vec![&["a 1"], &["b 2", "c"]], "key=2").unwrap_err();
        assert_eq!(err.position(), Some((2, 2)));
        assert!(matches!(err.root(), Error::TooNarrow { .. }));
    }

    #[test]
    fn numeric_descending_merge() {
        let out = merged(vec![&["10", "2"], &["9", "1"]], "key=1@num@desc").unwrap();
        assert_eq!(out, ["10", "9", "2", "1"]);
    }
}
