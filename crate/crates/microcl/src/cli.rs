//! Command-line entry point.
//!
//! Subcommands:
//! - `generate` — sample protocol orderings and export them as file lists
//!   (one file per batch per run).
//! - `train` — run an experiment from a config file; writes the accuracy
//!   CSV, an overhead sidecar, and optionally an SVG plot.
//! - `report` — aggregate the CSVs in a directory into one comparison
//!   report (text + SVG).
//! - `check` — run the library's invariant suites.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on any other failure.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::harness::{self, ExperimentConfig};
use crate::protocol::filelist::export_lines;
use crate::protocol::{DatasetIndex, Scenario};
use crate::selfcheck;
use crate::strategies::OverheadReport;

#[derive(Parser)]
#[command(
    name = "microcl",
    about = "Desk-scale continual-learning experiments: protocol generation, training, reports",
    version,
    disable_help_subcommand = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate protocol orderings and export per-batch file lists.
    Generate {
        /// Scenario tag: nicv2_79 | nicv2_196 | nicv2_391 | nc | ni.
        #[arg(long)]
        protocol: String,
        /// Number of independent orderings to sample.
        #[arg(long, default_value_t = 10)]
        runs: usize,
        /// Base seed; run r uses seed + r.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Frames per (session, class) record.
        #[arg(long, default_value_t = 300)]
        frames: usize,
    },
    /// Run an experiment described by a config file.
    Train {
        /// Path to the flat key=value config document.
        #[arg(long)]
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate accuracy CSVs in a directory into one comparison report.
    Report {
        /// Directory holding `<name>.csv` tables (and optional
        /// `<name>.overhead` sidecars) from `train`.
        #[arg(long)]
        dir: PathBuf,
        /// Report title.
        #[arg(long, default_value = "strategy comparison")]
        title: String,
    },
    /// Run the invariant/property suites.
    Check {
        /// Include the slow behavioral-ordering suites.
        #[arg(long)]
        full: bool,
    },
}

/// Run the CLI on the given arguments (without the program name) and
/// return the process exit code.
pub fn cli_main<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = std::iter::once("microcl".to_string())
        .chain(args.into_iter().map(Into::into))
        .collect();
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders its own usage/help/version text; --help exits 0.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Generate {
            protocol,
            runs,
            seed,
            out,
            frames,
        } => generate(&protocol, runs, seed, &out, frames),
        Command::Train { config, out } => train(&config, out),
        Command::Report { dir, title } => report(&dir, &title),
        Command::Check { full } => check(full),
    }
}

fn generate(protocol: &str, runs: usize, seed: u64, out: &Path, frames: usize) -> Result<()> {
    if runs == 0 {
        return Err(Error::Config("runs must be at least 1".into()));
    }
    let scenario = Scenario::parse(protocol)?;
    let index = DatasetIndex::reference_shape(frames);
    std::fs::create_dir_all(out)?;

    // The held-out test sessions are protocol-independent: one list.
    let test_units = index.test_units();
    std::fs::write(
        out.join("test_filelist.txt"),
        export_lines(&index, &test_units),
    )?;

    let mut total_batches = 0;
    for run in 0..runs {
        let ordering = crate::harness::run::generate_protocol(
            &index,
            &scenario,
            seed.wrapping_add(run as u64),
        )?;
        let run_dir = out.join(format!("run{run}"));
        std::fs::create_dir_all(&run_dir)?;
        let width = ordering.batches.len().to_string().len().max(2);
        for (b, units) in ordering.batches.iter().enumerate() {
            let name = format!("train_batch_{b:0width$}_filelist.txt");
            std::fs::write(run_dir.join(name), export_lines(&index, units))?;
            total_batches += 1;
        }
    }
    println!(
        "generated {} run(s) of {} ({} batch lists) under {}",
        runs,
        scenario.name(),
        total_batches,
        out.display()
    );
    Ok(())
}

fn train(config_path: &Path, out_override: Option<PathBuf>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(config_path)
        .map_err(|e| e.context(format!("config {}", config_path.display())))?;
    if let Some(out) = out_override {
        cfg.out_dir = out;
    }
    let outcome = harness::run_experiment(&cfg)?;

    std::fs::create_dir_all(&cfg.out_dir)?;
    let stem = cfg.artifact_stem();
    let csv_path = cfg.out_dir.join(format!("{stem}.csv"));
    harness::write_csv(&outcome.table, &csv_path)?;
    std::fs::write(
        cfg.out_dir.join(format!("{stem}.overhead")),
        harness::aggregate::format_overhead(outcome.overhead()),
    )?;
    if cfg.emit_plot {
        let report = harness::aggregate(&[(
            stem.clone(),
            outcome.table.clone(),
            Some(*outcome.overhead()),
        )])?;
        std::fs::write(
            cfg.out_dir.join(format!("{stem}.svg")),
            harness::render_svg(&report, &stem),
        )?;
    }

    let total_seconds: f64 = outcome.runs.iter().flat_map(|r| &r.seconds).sum();
    println!(
        "{}: {} run(s), {} evaluation points, final accuracy {:.3}% (mean), {:.1}s train+test",
        stem,
        outcome.table.num_runs(),
        outcome.table.rows(),
        outcome.table.final_mean(),
        total_seconds
    );
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn report(dir: &Path, title: &str) -> Result<()> {
    let mut tables: Vec<(String, harness::AccuracyTable, Option<OverheadReport>)> = Vec::new();
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    entries.sort();
    for path in entries {
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or("table")
            .to_string();
        let text = std::fs::read_to_string(&path)?;
        let table = harness::parse_csv(&text)
            .map_err(|e| e.context(format!("{}", path.display())))?;
        let sidecar = path.with_extension("overhead");
        let overhead = if sidecar.exists() {
            Some(
                harness::aggregate::parse_overhead(&std::fs::read_to_string(&sidecar)?)
                    .map_err(|e| e.context(format!("{}", sidecar.display())))?,
            )
        } else {
            None
        };
        tables.push((name, table, overhead));
    }
    if tables.is_empty() {
        return Err(Error::Config(format!(
            "no .csv tables found in {}",
            dir.display()
        )));
    }
    let report = harness::aggregate(&tables)?;
    let text = harness::render_text(&report);
    std::fs::write(dir.join("report.txt"), &text)?;
    std::fs::write(
        dir.join("comparison.svg"),
        harness::render_svg(&report, title),
    )?;
    print!("{text}");
    println!(
        "wrote {} and {}",
        dir.join("report.txt").display(),
        dir.join("comparison.svg").display()
    );
    Ok(())
}

fn check(full: bool) -> Result<()> {
    let report = selfcheck::run_checks(full);
    for line in &report.lines {
        println!("{line}");
    }
    println!("{} passed, {} failed", report.passed, report.failed);
    if report.failed > 0 {
        return Err(Error::Numerical(format!(
            "{} check(s) failed",
            report.failed
        )));
    }
    Ok(())
}
