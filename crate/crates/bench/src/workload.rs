use std::fmt;
use std::str::FromStr;

use leanstack_core::datagen::{schema, DataKind};
use leanstack_core::{Decimal, KeyRange};

use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum WorkloadKind {
    Grep,
    Sort,
    Wordcount,
    Select,
    Join,
    Aggregation,
}

impl WorkloadKind {
    pub const ALL: [WorkloadKind; 6] = [
        WorkloadKind::Grep,
        WorkloadKind::Sort,
        WorkloadKind::Wordcount,
        WorkloadKind::Select,
        WorkloadKind::Join,
        WorkloadKind::Aggregation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WorkloadKind::Grep => "grep",
            WorkloadKind::Sort => "sort",
            WorkloadKind::Wordcount => "wordcount",
            WorkloadKind::Select => "select",
            WorkloadKind::Join => "join",
            WorkloadKind::Aggregation => "aggregation",
        }
    }
}

impl FromStr for WorkloadKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        WorkloadKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| BenchError::Invalid(format!("unknown workload `{s}`")))
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Whether two correct runs must produce identical bytes, or only the same
/// multiset of lines.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OrderSensitivity {
    Deterministic,
    OrderInsensitive,
}

/// A workload and its parameters. Defaults target the generated datasets.
#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub kind: WorkloadKind,
    /// grep: substring to count.
    pub needle: String,
    /// select: keep item rows whose column exceeds the threshold.
    pub select_column: usize,
    pub threshold: Decimal,
    /// join: item key and order key.
    pub item_key: KeyRange,
    pub order_key: KeyRange,
    /// aggregation: sum `sum` grouped by `group`.
    pub group: KeyRange,
    pub sum: KeyRange,
}

impl Workload {
    pub fn new(kind: WorkloadKind) -> Workload {
        let col = |c| KeyRange::column(c).expect("schema columns are positive");
        Workload {
            kind,
            needle: "ka".into(),
            select_column: schema::ITEM_PRICE,
            threshold: "5000.00".parse().expect("valid decimal"),
            item_key: col(schema::ITEM_ID),
            order_key: col(schema::ORDER_ITEM_ID),
            group: col(schema::ITEM_CATEGORY),
            sum: col(schema::ITEM_PRICE),
        }
    }

    pub fn order_sensitivity(&self) -> OrderSensitivity {
        match self.kind {
            WorkloadKind::Select | WorkloadKind::Join => OrderSensitivity::OrderInsensitive,
            _ => OrderSensitivity::Deterministic,
        }
    }

    /// The dataset files the workload reads.
    pub fn inputs(&self) -> &'static [DataKind] {
        match self.kind {
            WorkloadKind::Grep | WorkloadKind::Sort | WorkloadKind::Wordcount => &[DataKind::Text],
            WorkloadKind::Select | WorkloadKind::Aggregation => &[DataKind::Item],
            WorkloadKind::Join => &[DataKind::Item, DataKind::Order],
        }
    }
}

impl FromStr for Workload {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        Ok(Workload::new(s.parse()?))
    }
}
