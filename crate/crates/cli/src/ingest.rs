//! Study CSV reading and writing.
//!
//! Required columns are `study_id`, `n` and `status`; `y`, `cutoff`,
//! `lower` and `upper` are read when the status needs them. Every other
//! column is kept as a factor level.

use std::collections::BTreeSet;
use std::io::{Read, Write};
use std::path::Path;

use censored_meta::{CensorStatus, StudyRecord};
use serde::Serialize;

use crate::CliError;

pub const CORE_COLUMNS: [&str; 7] = ["study_id", "n", "status", "y", "cutoff", "lower", "upper"];
/// Share of rejected rows above which ingestion fails.
pub const MAX_REJECTED_SHARE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    /// 1-based line in the file, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IngestReport {
    pub rows_read: usize,
    pub rows_rejected: usize,
    pub rejections: Vec<Rejection>,
    pub warnings: Vec<String>,
}

pub fn ingest_path(path: &Path) -> Result<(Vec<StudyRecord>, IngestReport), CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Fatal(format!("cannot open {}: {e}", path.display())))?;
    ingest(file)
}

pub fn ingest<R: Read>(reader: R) -> Result<(Vec<StudyRecord>, IngestReport), CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(false).from_reader(reader);
    let headers = rdr.headers().map_err(|e| CliError::Fatal(format!("cannot read header: {e}")))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut required = Vec::new();
    for name in ["study_id", "n", "status"] {
        match col(name) {
            Some(i) => required.push(i),
            None => return Err(CliError::Fatal(format!("missing required column `{name}`"))),
        }
    }
    let (id_col, n_col, status_col) = (required[0], required[1], required[2]);
    let optional = |name| col(name);
    let (y_col, cutoff_col, lower_col, upper_col) = (optional("y"), optional("cutoff"), optional("lower"), optional("upper"));
    let factor_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !CORE_COLUMNS.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut report = IngestReport::default();
    let mut records = Vec::new();
    let mut seen_ids = BTreeSet::new();
    for row in rdr.records() {
        report.rows_read += 1;
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(report.rows_read as u64 + 1, |p| p.line());
                report.rejections.push(Rejection { line, reason: format!("malformed row: {e}") });
                continue;
            }
        };
        let line = row.position().map_or(report.rows_read as u64 + 1, |p| p.line());
        let get = |c: Option<usize>| c.and_then(|i| row.get(i)).filter(|s| !s.is_empty());
        match parse_row(&get, id_col, n_col, status_col, y_col, cutoff_col, lower_col, upper_col) {
            Ok((mut record, warning)) => {
                if !seen_ids.insert(record.study_id.clone()) {
                    report.rejections.push(Rejection { line, reason: format!("duplicate study_id `{}`", record.study_id) });
                    continue;
                }
                if let Some(w) = warning {
                    report.warnings.push(format!("line {line}: {w}"));
                }
                for (i, name) in &factor_cols {
                    if let Some(v) = get(Some(*i)) {
                        record.factor_levels.insert(name.clone(), v.to_string());
                    }
                }
                records.push(record);
            }
            Err(reason) => report.rejections.push(Rejection { line, reason }),
        }
    }
    report.rows_rejected = report.rejections.len();
    for r in &report.rejections {
        log::warn!("line {}: rejected: {}", r.line, r.reason);
    }
    for w in &report.warnings {
        log::warn!("{w}");
    }
    if report.rows_read == 0 {
        return Err(CliError::Fatal("input has no data rows".into()));
    }
    if report.rows_rejected as f64 > MAX_REJECTED_SHARE * report.rows_read as f64 {
        return Err(CliError::Fatal(format!(
            "{} of {} rows rejected (limit {:.0}%); first: line {}: {}",
            report.rows_rejected,
            report.rows_read,
            MAX_REJECTED_SHARE * 100.0,
            report.rejections[0].line,
            report.rejections[0].reason
        )));
    }
    Ok((records, report))
}

#[allow(clippy::too_many_arguments)]
fn parse_row<'a>(
    get: &impl Fn(Option<usize>) -> Option<&'a str>,
    id_col: usize,
    n_col: usize,
    status_col: usize,
    y_col: Option<usize>,
    cutoff_col: Option<usize>,
    lower_col: Option<usize>,
    upper_col: Option<usize>,
) -> Result<(StudyRecord, Option<String>), String> {
    let count = |c: Option<usize>, name: &str| -> Result<u64, String> {
        let s = get(c).ok_or_else(|| format!("missing `{name}`"))?;
        s.parse::<u64>().map_err(|_| format!("`{name}` is not a non-negative integer: `{s}`"))
    };
    let id = get(Some(id_col)).ok_or("missing `study_id`")?.to_string();
    let n = count(Some(n_col), "n")?;
    if n == 0 {
        return Err("`n` must be positive".into());
    }
    let status = get(Some(status_col)).ok_or("missing `status`")?;
    let mut warning = None;
    let outcome = match status.to_ascii_lowercase().as_str() {
        "observed" => {
            let y = count(y_col, "y")?;
            if y > n {
                return Err(format!("bound violation: y = {y} exceeds n = {n}"));
            }
            CensorStatus::Observed { y }
        }
        "left" => {
            let c = count(cutoff_col, "cutoff")?;
            if c > n {
                warning = Some(format!("cutoff {c} exceeds n = {n}; clamped to n"));
            }
            CensorStatus::LeftCensored { c: c.min(n) }
        }
        "right" => {
            let c = count(cutoff_col, "cutoff")?;
            if c >= n {
                return Err(format!("bound violation: right cutoff {c} must be below n = {n}"));
            }
            CensorStatus::RightCensored { c }
        }
        "interval" => {
            let (a, b) = (count(lower_col, "lower")?, count(upper_col, "upper")?);
            if a >= b || b > n {
                return Err(format!("bound violation: interval ({a}, {b}] must satisfy lower < upper <= n = {n}"));
            }
            CensorStatus::IntervalCensored { a, b }
        }
        other => return Err(format!("unknown status `{other}` (expected observed, left, right or interval)")),
    };
    Ok((StudyRecord::new(id, n, outcome), warning))
}

/// Writes records in the ingest schema; factor columns are the union of all
/// records' factors, sorted.
pub fn write_records<W: Write>(records: &[StudyRecord], writer: W) -> Result<(), CliError> {
    let factors: BTreeSet<&str> = records.iter().flat_map(|r| r.factor_levels.keys().map(String::as_str)).collect();
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<&str> = CORE_COLUMNS.iter().copied().chain(factors.iter().copied()).collect();
    w.write_record(&header).map_err(fatal)?;
    for r in records {
        let blank = String::new;
        let (y, cutoff, lower, upper) = match r.outcome {
            CensorStatus::Observed { y } => (y.to_string(), blank(), blank(), blank()),
            CensorStatus::LeftCensored { c } | CensorStatus::RightCensored { c } => (blank(), c.to_string(), blank(), blank()),
            CensorStatus::IntervalCensored { a, b } => (blank(), blank(), a.to_string(), b.to_string()),
        };
        let mut row = vec![r.study_id.clone(), r.n.to_string(), r.outcome.label().to_string(), y, cutoff, lower, upper];
        row.extend(factors.iter().map(|f| r.level(f).unwrap_or("").to_string()));
        w.write_record(&row).map_err(fatal)?;
    }
    w.flush().map_err(|e| CliError::Fatal(e.to_string()))
}

fn fatal(e: csv::Error) -> CliError {
    CliError::Fatal(e.to_string())
}
