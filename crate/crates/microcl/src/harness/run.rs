//! Experiment execution: runs, evaluation points, accuracy tables.

use std::time::Instant;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::protocol::nicv2::{generate_nicv2, Nicv2Params};
use crate::protocol::scenarios::{generate_nc, generate_ni};
use crate::protocol::synth::SynthDataset;
use crate::protocol::{ProtocolRun, Scenario};
use crate::strategies::{OverheadReport, Trainer};

/// One run's trajectory: an evaluation after every batch, plus a batch-0
/// evaluation of the untouched init (the published tables start from an
/// evaluation of the pretrained-only model; without a pretrained backbone
/// this row measures the seeded random init instead).
#[derive(Debug, Clone)]
pub struct RunResult {
    /// Percent accuracies, `batches + 1` entries, batch 0 first.
    pub accuracies: Vec<f64>,
    /// Wall-clock seconds per row (training + evaluation; row 0 is
    /// evaluation only). Informational — hardware-dependent.
    pub seconds: Vec<f64>,
    pub overhead: OverheadReport,
}

/// Accuracy matrix: rows = evaluation points (batch 0 included), columns =
/// runs.
#[derive(Debug, Clone, PartialEq)]
pub struct AccuracyTable {
    /// `values[row][run]`.
    values: Vec<Vec<f64>>,
}

impl AccuracyTable {
    /// Build from per-run accuracy columns (all equally long, values in
    /// percent).
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<AccuracyTable> {
        if columns.is_empty() || columns[0].is_empty() {
            return Err(Error::Config("accuracy table must be non-empty".into()));
        }
        let rows = columns[0].len();
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Config(
                "runs produced different numbers of evaluation points".into(),
            ));
        }
        let mut values = vec![vec![0.0; columns.len()]; rows];
        for (r, col) in columns.iter().enumerate() {
            for (b, &v) in col.iter().enumerate() {
                if !v.is_finite() || !(0.0..=100.0).contains(&v) {
                    return Err(Error::Numerical(format!(
                        "accuracy {v} at row {b}, run {r} is outside [0, 100]"
                    )));
                }
                values[b][r] = v;
            }
        }
        Ok(AccuracyTable { values })
    }

    pub fn rows(&self) -> usize {
        self.values.len()
    }

    pub fn num_runs(&self) -> usize {
        self.values[0].len()
    }

    pub fn value(&self, row: usize, run: usize) -> f64 {
        self.values[row][run]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.values[row]
    }

    /// Per-row mean over runs.
    pub fn mean_curve(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect()
    }

    /// Per-row population standard deviation over runs (0 for one run).
    pub fn std_curve(&self) -> Vec<f64> {
        self.values
            .iter()
            .map(|r| {
                let n = r.len() as f64;
                let mean = r.iter().sum::<f64>() / n;
                (r.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
            })
            .collect()
    }

    /// Mean accuracy of the last row.
    pub fn final_mean(&self) -> f64 {
        *self.mean_curve().last().unwrap()
    }
}

/// A finished experiment: the table plus per-run details.
#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub table: AccuracyTable,
    pub runs: Vec<RunResult>,
}

impl ExperimentOutcome {
    /// The overheads are structural (strategy + architecture), identical
    /// across runs; expose run 0's.
    pub fn overhead(&self) -> &OverheadReport {
        &self.runs[0].overhead
    }
}

/// Generate the unit ordering for one run of a scenario.
pub fn generate_protocol(
    index: &crate::protocol::DatasetIndex,
    scenario: &Scenario,
    seed: u64,
) -> Result<ProtocolRun> {
    match scenario {
        Scenario::NicV2 { capacity } => {
            generate_nicv2(index, Nicv2Params::with_capacity(*capacity), seed)
        }
        Scenario::Nc { classes_per_batch } => generate_nc(index, *classes_per_batch, seed),
        Scenario::Ni => generate_ni(index, seed),
    }
}

/// Run every configured run (in parallel — each owns its model and
/// strategy state) and assemble the accuracy table. Deterministic given
/// the config: parallel and serial execution produce identical artifacts.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let dataset = SynthDataset::generate(cfg.dataset.clone(), cfg.seed)?;
    let runs: Vec<RunResult> = (0..cfg.runs)
        .into_par_iter()
        .map(|run| single_run(cfg, &dataset, run))
        .collect::<Result<_>>()?;
    let columns: Vec<Vec<f64>> = runs.iter().map(|r| r.accuracies.clone()).collect();
    Ok(ExperimentOutcome {
        table: AccuracyTable::from_columns(&columns)?,
        runs,
    })
}

/// One run: fixed data and init, run-specific batch ordering and shuffles.
pub fn single_run(
    cfg: &ExperimentConfig,
    dataset: &SynthDataset,
    run: usize,
) -> Result<RunResult> {
    let ctx = |what: &str, e: Error| e.context(format!("run {run}, {what}"));
    let run_seed = cfg.seed.wrapping_add(run as u64);
    let protocol = generate_protocol(dataset.index(), &cfg.protocol, run_seed)
        .map_err(|e| ctx("protocol generation", e))?;
    let test = dataset.test_batch().map_err(|e| ctx("test set", e))?;
    let mut trainer = Trainer::new(
        &cfg.dataset.shape,
        cfg.arch.clone(),
        cfg.strategy.clone(),
        cfg.schedule.clone(),
        cfg.seed, // same init for every run, like a shared pretrained start
        run_seed,
    )
    .map_err(|e| ctx("setup", e))?;

    let mut accuracies = Vec::with_capacity(protocol.batches.len() + 1);
    let mut seconds = Vec::with_capacity(protocol.batches.len() + 1);

    let t0 = Instant::now();
    accuracies.push(
        trainer
            .evaluate(&test)
            .map_err(|e| ctx("batch 0 evaluation", e))?,
    );
    seconds.push(t0.elapsed().as_secs_f64());

    for (i, units) in protocol.batches.iter().enumerate() {
        let b = i + 1;
        let t0 = Instant::now();
        let batch = dataset
            .materialize(units)
            .map_err(|e| ctx(&format!("batch {b} materialization"), e))?;
        trainer
            .train_batch(&batch)
            .map_err(|e| ctx(&format!("batch {b} training"), e))?;
        accuracies.push(
            trainer
                .evaluate(&test)
                .map_err(|e| ctx(&format!("batch {b} evaluation"), e))?,
        );
        seconds.push(t0.elapsed().as_secs_f64());
    }

    Ok(RunResult {
        accuracies,
        seconds,
        overhead: trainer.overhead_report(),
    })
}
