//! Workload reports and their record-file form.
//!
//! A report file is a header line followed by one record per repetition:
//!
//! ```text
//! workload engine bytes seconds rate digest
//! sort distributed 104857600 3.25 32263876.92307692 sha256:…
//! ```
//!
//! Seconds and rate are written in shortest round-trip decimal form, so
//! `rate × seconds` recomputed from the file rounds to `bytes`.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use leanstack_core::{Record, RecordReader};

use crate::workload::WorkloadKind;
use crate::BenchError;

pub const REPORT_HEADER: &str = "workload engine bytes seconds rate digest";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Engine {
    /// Single-node reference execution.
    Oracle,
    Distributed,
}

impl Engine {
    pub fn name(self) -> &'static str {
        match self {
            Engine::Oracle => "oracle",
            Engine::Distributed => "distributed",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Engine {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "oracle" => Ok(Engine::Oracle),
            "distributed" => Ok(Engine::Distributed),
            _ => Err(BenchError::Invalid(format!("unknown engine `{s}`"))),
        }
    }
}

/// Bytes per second.
pub fn compute_rate(input_bytes: u64, seconds: f64) -> Result<f64, BenchError> {
    if !(seconds.is_finite() && seconds > 0.0) {
        return Err(BenchError::Invalid(format!("wall time must be positive, got {seconds}")));
    }
    Ok(input_bytes as f64 / seconds)
}

/// True when `rate × seconds` rounds to `bytes`.
pub fn rate_consistent(bytes: u64, seconds: f64, rate: f64) -> bool {
    (rate * seconds).round() == bytes as f64
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadReport {
    pub workload: WorkloadKind,
    pub engine: Engine,
    pub input_bytes: u64,
    /// Mean wall time over the repetitions.
    pub wall_time: f64,
    pub rate: f64,
    pub output_digest: String,
    pub repetitions: Vec<f64>,
}

impl WorkloadReport {
    pub fn new(
        workload: WorkloadKind,
        engine: Engine,
        input_bytes: u64,
        output_digest: String,
        repetitions: Vec<f64>,
    ) -> Result<Self, BenchError> {
        if repetitions.is_empty() {
            return Err(BenchError::Invalid("a report needs at least one repetition".into()));
        }
        for &t in &repetitions {
            compute_rate(input_bytes, t)?;
        }
        let wall_time = repetitions.iter().sum::<f64>() / repetitions.len() as f64;
        Ok(WorkloadReport {
            workload,
            engine,
            input_bytes,
            wall_time,
            rate: compute_rate(input_bytes, wall_time)?,
            output_digest,
            repetitions,
        })
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        self.repetitions
            .iter()
            .map(|&seconds| ReportRow {
                workload: self.workload,
                engine: self.engine,
                bytes: self.input_bytes,
                seconds,
                rate: self.input_bytes as f64 / seconds,
                digest: self.output_digest.clone(),
            })
            .collect()
    }
}

/// One repetition as stored in a report file.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub workload: WorkloadKind,
    pub engine: Engine,
    pub bytes: u64,
    pub seconds: f64,
    pub rate: f64,
    pub digest: String,
}

impl ReportRow {
    pub fn to_record(&self) -> Record {
        Record::from_fields([
            self.workload.name().to_string(),
            self.engine.name().to_string(),
            self.bytes.to_string(),
            self.seconds.to_string(),
            self.rate.to_string(),
            self.digest.clone(),
        ])
        .expect("report fields contain no spaces")
    }

    fn from_record(r: &Record) -> Result<ReportRow, BenchError> {
        let f: Vec<&str> = r.fields().collect();
        let [workload, engine, bytes, seconds, rate, digest] = f.as_slice() else {
            return Err(BenchError::Invalid(format!("report row needs 6 fields: `{r}`")));
        };
        let num = |s: &str| BenchError::Invalid(format!("bad number `{s}` in report"));
        Ok(ReportRow {
            workload: workload.parse()?,
            engine: engine.parse()?,
            bytes: bytes.parse().map_err(|_| num(bytes))?,
            seconds: seconds.parse().map_err(|_| num(seconds))?,
            rate: rate.parse().map_err(|_| num(rate))?,
            digest: digest.to_string(),
        })
    }

    pub fn rate_consistent(&self) -> bool {
        rate_consistent(self.bytes, self.seconds, self.rate)
    }
}

pub fn write_report(reports: &[WorkloadReport], w: &mut dyn Write) -> Result<(), BenchError> {
    writeln!(w, "{REPORT_HEADER}")?;
    for r in reports {
        for row in r.rows() {
            row.to_record().write_to(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_report(reports: &[WorkloadReport], path: &Path) -> Result<(), BenchError> {
    let mut w = std::io::BufWriter::new(File::create(path)?);
    write_report(reports, &mut w)
}

pub fn read_report(path: &Path) -> Result<Vec<ReportRow>, BenchError> {
    let file = File::open(path).map_err(|e| BenchError::Unreadable(path.to_path_buf(), e))?;
    let mut rows = Vec::new();
    for (i, r) in RecordReader::new(BufReader::new(file)).enumerate() {
        let r = r?;
        if i == 0 {
            if r.as_str() != REPORT_HEADER {
                return Err(BenchError::Invalid(format!("{}: missing report header", path.display())));
            }
            continue;
        }
        rows.push(ReportRow::from_record(&r)?);
    }
    Ok(rows)
}

/// Groups consecutive rows of the same run back into reports.
pub fn reports_from_rows(rows: &[ReportRow]) -> Result<Vec<WorkloadReport>, BenchError> {
    let mut out: Vec<WorkloadReport> = Vec::new();
    for row in rows {
        match out.last_mut() {
            Some(r)
                if r.workload == row.workload
                    && r.engine == row.engine
                    && r.input_bytes == row.bytes
                    && r.output_digest == row.digest =>
            {
                r.repetitions.push(row.seconds);
                *r = WorkloadReport::new(r.workload, r.engine, r.input_bytes, r.output_digest.clone(), r.repetitions.clone())?;
            }
            _ => out.push(WorkloadReport::new(row.workload, row.engine, row.bytes, row.digest.clone(), vec![row.seconds])?),
        }
    }
    Ok(out)
}

/// Digest agreement between report rows of the same workload and volume.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RowAgreement {
    pub workload: WorkloadKind,
    pub bytes: u64,
    pub agree: bool,
    /// Distinct `(engine, digest)` pairs in first-seen order.
    pub digests: Vec<(Engine, String)>,
}

/// Checks that every row for a given workload and input volume carries the
/// same output digest, whichever engine or repetition produced it.
pub fn verify_rows(rows: &[ReportRow]) -> Vec<RowAgreement> {
    let mut out: Vec<RowAgreement> = Vec::new();
    for row in rows {
        let i = match out.iter().position(|a| a.workload == row.workload && a.bytes == row.bytes) {
            Some(i) => i,
            None => {
                out.push(RowAgreement {
                    workload: row.workload,
                    bytes: row.bytes,
                    agree: true,
                    digests: Vec::new(),
                });
                out.len() - 1
            }
        };
        let a = &mut out[i];
        let pair = (row.engine, row.digest.clone());
        if !a.digests.contains(&pair) {
            a.digests.push(pair);
        }
        a.agree = a.digests.iter().all(|(_, d)| *d == a.digests[0].1);
    }
    out
}
