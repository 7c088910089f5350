//! Long-format merge of trace files and a bare-bones SVG line chart.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{CliError, Result};
use crate::format::{num, parse_trace, TraceRow, TRACE_HEADER};

pub const LONG_HEADER: &str = "method,iter,statistic,value";

#[derive(Debug, Clone, PartialEq)]
pub struct LongRow {
    pub method: String,
    pub iter: usize,
    pub statistic: String,
    pub value: f64,
}

/// Method name for a trace file: its file stem.
pub fn method_name(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// One long row per nonempty numeric field of every successful trace row.
pub fn to_long(method: &str, rows: &[TraceRow]) -> Vec<LongRow> {
    rows.iter()
        .filter(|r| !r.is_failed())
        .flat_map(|r| {
            r.numeric_fields().into_iter().filter_map(move |(stat, v)| {
                v.map(|value| LongRow {
                    method: method.to_string(),
                    iter: r.iter,
                    statistic: stat.to_string(),
                    value,
                })
            })
        })
        .collect()
}

/// Reads each trace file, checking the header matches the trace layout.
pub fn load_traces(paths: &[impl AsRef<Path>]) -> Result<Vec<(String, Vec<TraceRow>)>> {
    if paths.is_empty() {
        return Err(CliError::Format("plotdata needs at least one trace file".into()));
    }
    paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Ok((method_name(p), parse_trace(&text, p)?))
        })
        .collect()
}

pub fn write_long(traces: &[(String, Vec<TraceRow>)]) -> String {
    let mut out = format!("{LONG_HEADER}\n");
    for (method, rows) in traces {
        for r in to_long(method, rows) {
            let _ = writeln!(out, "{},{},{},{}", r.method, r.iter, r.statistic, num(r.value));
        }
    }
    out
}

pub fn parse_long(text: &str, path: &Path) -> Result<Vec<LongRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == LONG_HEADER => {}
        _ => return Err(CliError::Format(format!("{}: expected header {LONG_HEADER}", path.display()))),
    }
    lines
        .filter(|(_, l)| !l.is_empty())
        .map(|(idx, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(CliError::parse(path, idx + 1, format!("expected 4 fields, found {}", f.len())));
            }
            Ok(LongRow {
                method: f[0].to_string(),
                iter: f[1].parse().map_err(|_| CliError::parse(path, idx + 1, "bad iter"))?,
                statistic: f[2].to_string(),
                value: f[3].parse().map_err(|_| CliError::parse(path, idx + 1, "bad value"))?,
            })
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

const PALETTE: [&str; 8] = [
    "#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666",
];

/// Line chart of `statistic` against iteration, one polyline per method.
/// Non-finite values are dropped.
pub fn svg_chart(traces: &[(String, Vec<TraceRow>)], statistic: &str) -> Result<String> {
    if !TRACE_HEADER[1..7].contains(&statistic) {
        return Err(CliError::Format(format!("unknown statistic {statistic:?}")));
    }
    let series: Vec<(&str, Vec<(f64, f64)>)> = traces
        .iter()
        .map(|(m, rows)| {
            let pts = to_long(m, rows)
                .into_iter()
                .filter(|r| r.statistic == statistic && r.value.is_finite())
                .map(|r| (r.iter as f64, r.value))
                .collect();
            (m.as_str(), pts)
        })
        .collect();
    let all = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let (w, h, pad) = (640.0, 400.0, 50.0);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);

    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<path d="M{pad} {pad} V{} H{}" fill="none" stroke="black"/>"#,
        h - pad,
        w - pad
    );
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">iteration</text>"#, w / 2.0, h - 15.0);
    let _ = writeln!(out, r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">{statistic}</text>"#, h / 2.0, h / 2.0);
    let _ = writeln!(out, r#"<text x="{pad}" y="{}" font-size="10">{x0}</text>"#, h - pad + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{x1}</text>"#, w - pad, h - pad + 14.0);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y0:.3}</text>"#, pad - 4.0, h - pad);
    let _ = writeln!(out, r#"<text x="{}" y="{}" font-size="10" text-anchor="end">{y1:.3}</text>"#, pad - 4.0, pad + 4.0);
    for (i, (method, pts)) in series.iter().enumerate() {
        let method = escape(method);
        let colour = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(
            out,
            r#"<polyline data-method="{method}" points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            coords.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="11" fill="{colour}">{method}</text>"#,
            w - pad - 120.0,
            pad + 14.0 * (i as f64 + 1.0)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}
