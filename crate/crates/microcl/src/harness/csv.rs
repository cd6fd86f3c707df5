//! Accuracy-table CSV: the published tables' column layout.
//!
//! ```text
//! Batch,Run 0,Run 1,...,Run N-1
//! 0,1.522,1.522,...
//! 1,8.120,7.954,...
//! ```
//!
//! Values carry three decimal places; lines end with LF; the file is UTF-8.

use std::path::Path;

use super::run::AccuracyTable;
use crate::error::{Error, Result};

/// Render a table to the canonical CSV text.
pub fn format_csv(table: &AccuracyTable) -> String {
    let mut out = String::new();
    out.push_str("Batch");
    for r in 0..table.num_runs() {
        out.push_str(&format!(",Run {r}"));
    }
    out.push('\n');
    for b in 0..table.rows() {
        out.push_str(&b.to_string());
        for r in 0..table.num_runs() {
            out.push_str(&format!(",{:.3}", table.value(b, r)));
        }
        out.push('\n');
    }
    out
}

pub fn write_csv(table: &AccuracyTable, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, format_csv(table))?;
    Ok(())
}

/// Parse CSV text produced by [`format_csv`] back into a table.
pub fn parse_csv(text: &str) -> Result<AccuracyTable> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let mut cols = header.split(',');
    if cols.next() != Some("Batch") {
        return Err(Error::Parse {
            line: 1,
            msg: "header must start with 'Batch'".into(),
        });
    }
    let mut num_runs = 0;
    for c in cols {
        if c != format!("Run {num_runs}") {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected column 'Run {num_runs}', got '{c}'"),
            });
        }
        num_runs += 1;
    }
    if num_runs == 0 {
        return Err(Error::Parse {
            line: 1,
            msg: "no run columns".into(),
        });
    }

    let mut columns = vec![Vec::new(); num_runs];
    let mut expected_row = 0usize;
    for (i, line) in lines {
        let line_no = i + 1;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != num_runs + 1 {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("expected {} fields, got {}", num_runs + 1, fields.len()),
            });
        }
        let row: usize = fields[0].parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad batch index '{}'", fields[0]),
        })?;
        if row != expected_row {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("batch indices must ascend from 0; expected {expected_row}, got {row}"),
            });
        }
        expected_row += 1;
        for (r, f) in fields[1..].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("bad accuracy '{f}'"),
            })?;
            columns[r].push(v);
        }
    }
    if expected_row == 0 {
        return Err(Error::Parse {
            line: 1,
            msg: "no data rows".into(),
        });
    }
    AccuracyTable::from_columns(&columns)
}
