//! Core of the leanstack toolkit: the text-record model, the single-node
//! command set (sort, merge, group, select, join, tokenize, grep), the stage
//! interpreter used by both the command line and worker daemons, and the
//! synthetic dataset generators.

pub mod datagen;
pub mod decimal;
pub mod error;
pub mod key;
pub mod pipeline;
pub mod record;
pub mod tukubai;

pub use decimal::Decimal;
pub use error::{Error, Result};
pub use key::{compare_records, parse_key_spec, Direction, KeyRange, Mode};
pub use record::{project, Record, RecordReader};
