//! File-list serialization of batches: one `path label` pair per line.
//!
//! Paths follow the session/object layout
//! `s<session>/o<object>/C_<session>_<object>_<frame>.png` with 1-based
//! session and object ids in the path (zero-padded to two digits inside the
//! file name, three for the frame) and 0-based class labels in the label
//! column. The path is authoritative: the label must agree with the class
//! encoded in the path, and any disagreement, malformed line, or duplicate
//! path is a hard parse error naming the line.

use std::collections::HashSet;

use super::{DatasetIndex, PatternRef, TrainUnit};
use crate::error::{Error, Result};

/// One parsed file-list line (all ids 0-based).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub session: usize,
    pub class: usize,
    pub frame: usize,
    pub path: String,
}

/// Canonical relative path of one frame (0-based inputs, 1-based path ids).
pub fn pattern_path(session: usize, class: usize, frame: usize) -> String {
    format!(
        "s{}/o{}/C_{:02}_{:02}_{:03}.png",
        session + 1,
        class + 1,
        session + 1,
        class + 1,
        frame
    )
}

/// Render the file-list lines for a set of units, every frame of each unit
/// in index order. Stored paths are reused verbatim; row-referenced frames
/// get the canonical path.
pub fn export_lines(index: &DatasetIndex, units: &[TrainUnit]) -> String {
    let mut out = String::new();
    for u in units {
        let record = index.record(u.session, u.class);
        for (row, p) in record.patterns.iter().enumerate() {
            let path = match p {
                PatternRef::Path(s) => s.clone(),
                PatternRef::Row(_) => pattern_path(u.session, u.class, row),
            };
            out.push_str(&path);
            out.push(' ');
            out.push_str(&u.class.to_string());
            out.push('\n');
        }
    }
    out
}

/// Parse a file list. Blank lines and `#` comments are skipped; everything
/// else must be a valid `path label` pair consistent with itself.
pub fn parse(text: &str) -> Result<Vec<Entry>> {
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut it = trimmed.split_whitespace();
        let (path, label) = match (it.next(), it.next(), it.next()) {
            (Some(p), Some(l), None) => (p, l),
            _ => {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected 'path label', got '{trimmed}'"),
                })
            }
        };
        let label: usize = label.parse().map_err(|_| Error::Parse {
            line,
            msg: format!("label '{label}' is not a non-negative integer"),
        })?;
        let entry = parse_path(path, line)?;
        if entry.class != label {
            return Err(Error::Parse {
                line,
                msg: format!(
                    "label {label} disagrees with path '{path}' (class {})",
                    entry.class
                ),
            });
        }
        if !seen.insert(entry.path.clone()) {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate path '{path}'"),
            });
        }
        entries.push(entry);
    }
    Ok(entries)
}

fn parse_path(path: &str, line: usize) -> Result<Entry> {
    let err = |msg: String| Error::Parse { line, msg };
    let parts: Vec<&str> = path.split('/').collect();
    if parts.len() != 3 {
        return Err(err(format!(
            "path '{path}' must look like s<session>/o<object>/C_<s>_<o>_<frame>.png"
        )));
    }
    let session1 = parts[0]
        .strip_prefix('s')
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v >= 1)
        .ok_or_else(|| err(format!("bad session directory '{}'", parts[0])))?;
    let object1 = parts[1]
        .strip_prefix('o')
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v >= 1)
        .ok_or_else(|| err(format!("bad object directory '{}'", parts[1])))?;
    let stem = parts[2]
        .strip_prefix("C_")
        .and_then(|v| v.strip_suffix(".png"))
        .ok_or_else(|| err(format!("bad file name '{}'", parts[2])))?;
    let fields: Vec<&str> = stem.split('_').collect();
    if fields.len() != 3 {
        return Err(err(format!(
            "file name '{}' must carry session, object, and frame ids",
            parts[2]
        )));
    }
    let fs: usize = fields[0]
        .parse()
        .map_err(|_| err(format!("bad session id in file name '{}'", parts[2])))?;
    let fo: usize = fields[1]
        .parse()
        .map_err(|_| err(format!("bad object id in file name '{}'", parts[2])))?;
    let frame: usize = fields[2]
        .parse()
        .map_err(|_| err(format!("bad frame id in file name '{}'", parts[2])))?;
    if fs != session1 || fo != object1 {
        return Err(err(format!(
            "file name '{}' disagrees with directories s{session1}/o{object1}",
            parts[2]
        )));
    }
    Ok(Entry {
        session: session1 - 1,
        class: object1 - 1,
        frame,
        path: path.to_string(),
    })
}
