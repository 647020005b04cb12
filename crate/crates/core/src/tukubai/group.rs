//! Grouping over key-sorted input: `count` and `sm2`.

use std::cmp::Ordering;

use crate::decimal::Decimal;
use crate::error::{Error, Result};
use crate::key::KeyRange;
use crate::record::Record;

/// Shared bookkeeping for a sorted, grouped scan: tracks the current
/// group's first record and verifies non-decreasing key order.
struct GroupScan<I> {
    input: I,
    key: KeyRange,
    current: Option<Record>,
    seen: u64,
    done: bool,
}

enum Step {
    Same(Record),
    New(Record, Option<Record>),
    End(Option<Record>),
}

impl<I: Iterator<Item = Result<Record>>> GroupScan<I> {
    fn new(input: I, key: KeyRange) -> Self {
        GroupScan {
            input,
            key,
            current: None,
            seen: 0,
            done: false,
        }
    }

    fn step(&mut self) -> Result<Step> {
        let Some(r) = self.input.next() else {
            return Ok(Step::End(self.current.take()));
        };
        self.seen += 1;
        let at = |e: Error| e.at(1, self.seen);
        let r = r?;
        self.key.check(r.as_str()).map_err(at)?;
        match &self.current {
            None => {
                self.current = Some(r.clone());
                Ok(Step::New(r, None))
            }
            Some(c) => match self.key.cmp_lines(r.as_str(), c.as_str()) {
                Ordering::Less => Err(at(Error::Unsorted)),
                Ordering::Equal => Ok(Step::Same(r)),
                Ordering::Greater => {
                    let prev = self.current.replace(r.clone());
                    Ok(Step::New(r, prev))
                }
            },
        }
    }
}

fn key_line(key: &KeyRange, r: &Record) -> String {
    key.slice(r.as_str()).unwrap_or_default().to_string()
}

/// One output record per distinct key: the key columns followed by the
/// number of records in the group.
pub struct CountByKey<I> {
    scan: GroupScan<I>,
    count: u64,
}

pub fn count_by_key<I>(input: I, key: KeyRange) -> CountByKey<I::IntoIter>
where
    I: IntoIterator<Item = Result<Record>>,
{
    CountByKey {
        scan: GroupScan::new(input.into_iter(), key),
        count: 0,
    }
}

impl<I: Iterator<Item = Result<Record>>> CountByKey<I> {
    fn emit(&self, group: &Record) -> Record {
        let mut line = key_line(&self.scan.key, group);
        line.push(' ');
        line.push_str(&self.count.to_string());
        Record::from_line_unchecked(line)
    }
}

impl<I: Iterator<Item = Result<Record>>> Iterator for CountByKey<I> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.scan.done {
            match self.scan.step() {
                Err(e) => {
                    self.scan.done = true;
                    return Some(Err(e));
                }
                Ok(Step::Same(_)) => self.count += 1,
                Ok(Step::New(_, None)) => self.count = 1,
                Ok(Step::New(_, Some(prev))) => {
                    let out = self.emit(&prev);
                    self.count = 1;
                    return Some(Ok(out));
                }
                Ok(Step::End(last)) => {
                    self.scan.done = true;
                    return last.map(|g| Ok(self.emit(&g)));
                }
            }
        }
        None
    }
}

/// One output record per distinct key: the key columns followed by the
/// exact decimal sum of each column in the sum span.
pub struct Sm2<I> {
    scan: GroupScan<I>,
    sum: KeyRange,
    totals: Vec<Decimal>,
}

pub fn sm2<I>(input: I, key: KeyRange, sum: KeyRange) -> Result<Sm2<I::IntoIter>>
where
    I: IntoIterator<Item = Result<Record>>,
{
    if key.overlaps(&sum) {
        return Err(Error::InvalidArgument(format!(
            "key columns {}-{} overlap sum columns {}-{}",
            key.from(),
            key.to(),
            sum.from(),
            sum.to()
        )));
    }
    Ok(Sm2 {
        scan: GroupScan::new(input.into_iter(), key),
        sum,
        totals: Vec::new(),
    })
}

impl<I: Iterator<Item = Result<Record>>> Sm2<I> {
    fn values(&self, r: &Record) -> Result<Vec<Decimal>> {
        if r.width() < self.sum.to() {
            return Err(Error::TooNarrow {
                width: r.width(),
                needed: self.sum.to(),
            });
        }
        self.sum.columns(r.as_str()).map(str::parse).collect()
    }

    fn accumulate(&mut self, r: &Record) -> Result<()> {
        let values = self.values(r)?;
        for (t, v) in self.totals.iter_mut().zip(&values) {
            *t = t.checked_add(v)?;
        }
        Ok(())
    }

    fn emit(&self, group: &Record) -> Record {
        let mut line = key_line(&self.scan.key, group);
        for t in &self.totals {
            line.push(' ');
            line.push_str(&t.to_string());
        }
        Record::from_line_unchecked(line)
    }

    fn advance(&mut self) -> Result<Option<Record>> {
        loop {
            let step = self.scan.step()?;
            let seen = self.scan.seen;
            let at = |e: Error| e.at(1, seen);
            match step {
                Step::Same(r) => self.accumulate(&r).map_err(at)?,
                Step::New(r, prev) => {
                    let out = prev.map(|p| self.emit(&p));
                    self.totals = self.values(&r).map_err(at)?;
                    if out.is_some() {
                        return Ok(out);
                    }
                }
                Step::End(last) => {
                    self.scan.done = true;
                    return Ok(last.map(|g| self.emit(&g)));
                }
            }
        }
    }
}

impl<I: Iterator<Item = Result<Record>>> Iterator for Sm2<I> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.scan.done {
            return None;
        }
        let out = self.advance().transpose();
        if matches!(out, Some(Err(_))) {
            self.scan.done = true;
        }
        out
    }
}
