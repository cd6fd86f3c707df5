//! Cross-strategy aggregation: mean/std curves, final-accuracy summary,
//! and the memory-overhead comparison table.

use std::fmt::Write as _;

use super::run::AccuracyTable;
use crate::error::{Error, Result};
use crate::strategies::{OverheadReport, StrategyKind};

/// Aggregated curves of one strategy.
#[derive(Debug, Clone)]
pub struct StrategyCurves {
    pub name: String,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub num_runs: usize,
    pub overhead: Option<OverheadReport>,
}

impl StrategyCurves {
    pub fn final_mean(&self) -> f64 {
        *self.mean.last().unwrap()
    }
}

/// The comparison report over several strategies on one protocol.
#[derive(Debug, Clone)]
pub struct ComparisonReport {
    /// Evaluation points per strategy (batch-0 row included).
    pub rows: usize,
    pub strategies: Vec<StrategyCurves>,
}

/// Aggregate named tables (with optional overhead sidecars) into one
/// report. All tables must cover the same number of evaluation points.
pub fn aggregate(
    tables: &[(String, AccuracyTable, Option<OverheadReport>)],
) -> Result<ComparisonReport> {
    if tables.is_empty() {
        return Err(Error::Config("nothing to aggregate".into()));
    }
    let rows = tables[0].1.rows();
    for (name, t, _) in tables {
        if t.rows() != rows {
            return Err(Error::Config(format!(
                "table '{}' has {} evaluation points, expected {} (mixed protocols?)",
                name,
                t.rows(),
                rows
            )));
        }
    }
    let strategies = tables
        .iter()
        .map(|(name, t, overhead)| StrategyCurves {
            name: name.clone(),
            mean: t.mean_curve(),
            std: t.std_curve(),
            num_runs: t.num_runs(),
            overhead: *overhead,
        })
        .collect();
    Ok(ComparisonReport { rows, strategies })
}

/// Render the report as a readable text document.
pub fn render_text(report: &ComparisonReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Strategies: {}", report.strategies.len());
    let _ = writeln!(out, "Evaluation points per run: {}\n", report.rows);

    let _ = writeln!(out, "Final accuracy (mean +/- std over runs):");
    let mut by_final: Vec<&StrategyCurves> = report.strategies.iter().collect();
    by_final.sort_by(|a, b| b.final_mean().total_cmp(&a.final_mean()));
    for s in &by_final {
        let _ = writeln!(
            out,
            "  {:<24} {:>7.3} +/- {:>6.3}   ({} runs)",
            s.name,
            s.final_mean(),
            s.std.last().unwrap(),
            s.num_runs
        );
    }

    if report.strategies.iter().any(|s| s.overhead.is_some()) {
        let _ = writeln!(out, "\nMemory overhead beyond the live model (bytes):");
        let _ = writeln!(
            out,
            "  {:<24} {:>14} {:>14} {:>14} {:>14} {:>14}",
            "strategy", "importance", "anchor", "classifier", "params total", "stored data"
        );
        for s in &report.strategies {
            if let Some(o) = &s.overhead {
                let _ = writeln!(
                    out,
                    "  {:<24} {:>14} {:>14} {:>14} {:>14} {:>14}",
                    s.name,
                    o.importance_bytes,
                    o.anchor_bytes,
                    o.classifier_bytes,
                    o.param_bytes(),
                    o.data_bytes
                );
            }
        }
    }

    let _ = writeln!(out, "\nMean accuracy by evaluation point:");
    let mut header = format!("  {:>5}", "batch");
    for s in &report.strategies {
        let _ = write!(header, " {:>12}", truncate(&s.name, 12));
    }
    let _ = writeln!(out, "{header}");
    for b in 0..report.rows {
        let mut line = format!("  {b:>5}");
        for s in &report.strategies {
            let _ = write!(line, " {:>12.3}", s.mean[b]);
        }
        let _ = writeln!(out, "{line}");
    }
    out
}

fn truncate(s: &str, n: usize) -> String {
    if s.len() <= n {
        s.to_string()
    } else {
        s[..n].to_string()
    }
}

/// Render an overhead record as the flat key-value sidecar format.
pub fn format_overhead(o: &OverheadReport) -> String {
    format!(
        "strategy = {}\ndata_bytes = {}\nimportance_bytes = {}\nanchor_bytes = {}\nclassifier_bytes = {}\n",
        o.strategy.name(),
        o.data_bytes,
        o.importance_bytes,
        o.anchor_bytes,
        o.classifier_bytes
    )
}

/// Parse an overhead sidecar produced by [`format_overhead`].
pub fn parse_overhead(text: &str) -> Result<OverheadReport> {
    let mut strategy = None;
    let mut fields = [None::<u64>; 4];
    const NAMES: [&str; 4] = [
        "data_bytes",
        "importance_bytes",
        "anchor_bytes",
        "classifier_bytes",
    ];
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(Error::Parse {
            line: i + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        if k == "strategy" {
            strategy = Some(StrategyKind::parse(v)?);
        } else if let Some(slot) = NAMES.iter().position(|n| *n == k) {
            fields[slot] = Some(v.parse().map_err(|_| Error::Parse {
                line: i + 1,
                msg: format!("bad byte count '{v}'"),
            })?);
        } else {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("unknown key '{k}'"),
            });
        }
    }
    let missing = |what: &str| Error::Parse {
        line: 1,
        msg: format!("missing key '{what}'"),
    };
    Ok(OverheadReport {
        strategy: strategy.ok_or_else(|| missing("strategy"))?,
        data_bytes: fields[0].ok_or_else(|| missing(NAMES[0]))?,
        importance_bytes: fields[1].ok_or_else(|| missing(NAMES[1]))?,
        anchor_bytes: fields[2].ok_or_else(|| missing(NAMES[2]))?,
        classifier_bytes: fields[3].ok_or_else(|| missing(NAMES[3]))?,
    })
}
