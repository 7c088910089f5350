//! Trace and summary CSV files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};

/// Shortest representation that parses back to the same `f64`.
pub fn num(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) || !v.is_finite() {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub const TRACE_HEADER: [&str; 8] = [
    "iter",
    "log_err_to_thetahat",
    "log_err_to_thetastar",
    "test_error",
    "comm_vectors",
    "inner_residual_max",
    "wall_time_s",
    "status",
];

pub const STATUS_OK: &str = "ok";
pub const STATUS_FAILED: &str = "FAILED";

/// One line of a trace file. Logs are natural logarithms; `comm_vectors` and
/// `wall_time_s` are cumulative. A failed run ends with a row whose status is
/// `FAILED` and whose numeric fields are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iter: usize,
    pub log_err_to_thetahat: Option<f64>,
    pub log_err_to_thetastar: Option<f64>,
    pub test_error: Option<f64>,
    pub comm_vectors: Option<u64>,
    pub inner_residual_max: Option<f64>,
    pub wall_time_s: Option<f64>,
    pub status: String,
}

impl TraceRow {
    pub fn failed(iter: usize) -> Self {
        TraceRow {
            iter,
            log_err_to_thetahat: None,
            log_err_to_thetastar: None,
            test_error: None,
            comm_vectors: None,
            inner_residual_max: None,
            wall_time_s: None,
            status: STATUS_FAILED.to_string(),
        }
    }

    pub fn is_failed(&self) -> bool {
        self.status == STATUS_FAILED
    }

    /// Numeric columns by header name, in header order.
    pub fn numeric_fields(&self) -> [(&'static str, Option<f64>); 6] {
        [
            (TRACE_HEADER[1], self.log_err_to_thetahat),
            (TRACE_HEADER[2], self.log_err_to_thetastar),
            (TRACE_HEADER[3], self.test_error),
            (TRACE_HEADER[4], self.comm_vectors.map(|v| v as f64)),
            (TRACE_HEADER[5], self.inner_residual_max),
            (TRACE_HEADER[6], self.wall_time_s),
        ]
    }
}

pub fn write_trace(rows: &[TraceRow]) -> String {
    let mut out = TRACE_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.iter,
            opt(r.log_err_to_thetahat),
            opt(r.log_err_to_thetastar),
            opt(r.test_error),
            r.comm_vectors.map(|v| v.to_string()).unwrap_or_default(),
            opt(r.inner_residual_max),
            opt(r.wall_time_s),
            r.status
        );
    }
    out
}

fn field<T: std::str::FromStr>(raw: &str, name: &str, path: &Path, line: usize) -> Result<Option<T>> {
    if raw.is_empty() {
        return Ok(None);
    }
    raw.parse()
        .map(Some)
        .map_err(|_| CliError::parse(path, line, format!("{name}: cannot parse {raw:?}")))
}

pub fn parse_trace(text: &str, path: &Path) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    let header = lines.next().map(|(_, l)| l).unwrap_or_default();
    if header != TRACE_HEADER.join(",") {
        return Err(CliError::Format(format!(
            "{}: unexpected trace header {header:?}",
            path.display()
        )));
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != TRACE_HEADER.len() {
            return Err(CliError::parse(
                path,
                line_no,
                format!("expected {} fields, found {}", TRACE_HEADER.len(), f.len()),
            ));
        }
        rows.push(TraceRow {
            iter: field(f[0], "iter", path, line_no)?
                .ok_or_else(|| CliError::parse(path, line_no, "iter is empty"))?,
            log_err_to_thetahat: field(f[1], TRACE_HEADER[1], path, line_no)?,
            log_err_to_thetastar: field(f[2], TRACE_HEADER[2], path, line_no)?,
            test_error: field(f[3], TRACE_HEADER[3], path, line_no)?,
            comm_vectors: field(f[4], TRACE_HEADER[4], path, line_no)?,
            inner_residual_max: field(f[5], TRACE_HEADER[5], path, line_no)?,
            wall_time_s: field(f[6], TRACE_HEADER[6], path, line_no)?,
            status: f[7].to_string(),
        });
    }
    Ok(rows)
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

const SUMMARY_STATS: [&str; 4] = [TRACE_HEADER[1], TRACE_HEADER[2], TRACE_HEADER[3], TRACE_HEADER[4]];

/// Per-method, per-iteration median and mean across replications. Only
/// replications that reached an iteration contribute to it; `reps` counts them.
pub fn write_summary(methods: &[(String, Vec<Vec<TraceRow>>)]) -> String {
    let mut out = String::from("method,iter,reps");
    for stat in SUMMARY_STATS {
        let _ = write!(out, ",median_{stat},mean_{stat}");
    }
    out.push('\n');
    for (label, reps) in methods {
        let longest = reps.iter().map(|r| r.iter().filter(|row| !row.is_failed()).count()).max().unwrap_or(0);
        for t in 0..longest {
            let rows: Vec<&TraceRow> = reps.iter().filter_map(|r| r.get(t).filter(|row| !row.is_failed())).collect();
            let _ = write!(out, "{label},{t},{}", rows.len());
            for stat in SUMMARY_STATS {
                let mut vals: Vec<f64> = rows
                    .iter()
                    .filter_map(|r| r.numeric_fields().iter().find(|(n, _)| *n == stat).and_then(|(_, v)| *v))
                    .collect();
                let m = mean(&vals);
                let _ = write!(out, ",{},{}", opt(median(&mut vals)), opt(m));
            }
            out.push('\n');
        }
    }
    out
}
