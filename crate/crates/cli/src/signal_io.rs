//! Raw signal files (one decimal sample per line) and simulation CSVs.

use std::fmt::Write as _;
use std::path::Path;

use crate::jobs::JobError;

/// Parses a raw signal: one sample per line, blank lines and `#` comments ignored.
pub fn parse_signal(text: &str) -> Result<Vec<f64>, JobError> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(i, l)| {
            l.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| JobError::Invalid(format!("line {}: bad sample {l:?}", i + 1)))
        })
        .collect()
}

pub fn read_signal(path: &Path) -> Result<Vec<f64>, JobError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| JobError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse_signal(&text)
}

/// Raw signal text, one sample per line.
pub fn format_signal(values: &[f64]) -> String {
    values.iter().fold(String::new(), |mut s, v| {
        let _ = writeln!(s, "{v}");
        s
    })
}

/// CSV with a leading sample index column; shorter columns are left empty.
pub fn sim_csv(headers: &[&str], columns: &[&[f64]]) -> String {
    let mut out = String::from("k");
    for h in headers {
        let _ = write!(out, ",{h}");
    }
    out.push('\n');
    let rows = columns.iter().map(|c| c.len()).max().unwrap_or(0);
    for k in 0..rows {
        let _ = write!(out, "{k}");
        for c in columns {
            match c.get(k) {
                Some(v) => {
                    let _ = write!(out, ",{v}");
                }
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}
