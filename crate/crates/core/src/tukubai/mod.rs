//! Single-node streaming commands. Each consumes and produces record
//! streams (`Iterator<Item = Result<Record>>`) so they compose like a shell
//! pipeline.

mod group;
mod join;
mod merge;
mod select;
mod sort;
mod text;

pub use group::{count_by_key, sm2, CountByKey, Sm2};
pub use join::{merge_join, MergeJoin};
pub use merge::{dmerge, DMerge};
pub use select::{select_rows, SelectRows};
pub use sort::{msort, MemoryBudget, SortOptions, SortedRun, SortedStream, MAX_FAN_IN};
pub use text::{grep_count, tokenize, Tokenize};

use crate::error::Result;
use crate::record::Record;

/// Counts records, failing on the first unreadable one.
pub fn lcnt<I>(records: I) -> Result<u64>
where
    I: IntoIterator<Item = Result<Record>>,
{
    records.into_iter().try_fold(0, |n, r| r.map(|_| n + 1))
}
