use crate::decimal::Decimal;
use crate::error::{Error, Result};
use crate::record::Record;

/// Keeps records whose `column` holds a value strictly greater than
/// `threshold`, in input order.
pub struct SelectRows<I> {
    input: I,
    column: usize,
    threshold: Decimal,
    seen: u64,
    done: bool,
}

pub fn select_rows<I>(input: I, column: usize, threshold: Decimal) -> Result<SelectRows<I::IntoIter>>
where
    I: IntoIterator<Item = Result<Record>>,
{
    if column == 0 {
        return Err(Error::InvalidArgument("columns are numbered from 1".into()));
    }
    Ok(SelectRows {
        input: input.into_iter(),
        column,
        threshold,
        seen: 0,
        done: false,
    })
}

impl<I: Iterator<Item = Result<Record>>> SelectRows<I> {
    fn keep(&self, r: &Record) -> Result<bool> {
        let cell = r.field(self.column).ok_or(Error::ColumnOutOfRange {
            column: self.column,
            width: r.width(),
        })?;
        Ok(cell.parse::<Decimal>()? > self.threshold)
    }
}

impl<I: Iterator<Item = Result<Record>>> Iterator for SelectRows<I> {
    type Item = Result<Record>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let r = self.input.next()?;
            self.seen += 1;
            let r = match r {
                Ok(r) => r,
                Err(e) => {
                    self.done = true;
                    return Some(Err(e));
                }
            };
            match self.keep(&r) {
                Ok(true) => return Some(Ok(r)),
                Ok(false) => {}
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.at(1, self.seen)));
                }
            }
        }
        None
    }
}
