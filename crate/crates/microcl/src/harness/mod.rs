//! Experiment harness: configuration, execution over runs, CSV emission,
//! aggregation across strategies, and SVG plots.

pub mod aggregate;
pub mod config;
pub mod csv;
pub mod plot;
pub mod run;

pub use aggregate::{aggregate, render_text, ComparisonReport, StrategyCurves};
pub use config::{parse_arch, sessions_per_batch, ExperimentConfig};
pub use csv::{format_csv, parse_csv, write_csv};
pub use plot::render_svg;
pub use run::{run_experiment, AccuracyTable, ExperimentOutcome, RunResult};
