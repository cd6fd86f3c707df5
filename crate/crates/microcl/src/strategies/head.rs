//! Consolidated output head: the dual weight store behind the CWR-family
//! strategies.
//!
//! The head keeps two sets of class weights:
//!
//! * `cw` — consolidated weights, one row per class (weights + bias). These
//!   are what inference uses; they start at zero ("maximal" head layout: all
//!   class rows pre-allocated up front).
//! * `tw` — temporary weights: the live head parameters of the network,
//!   (re)written before each training batch and read back afterwards.
//!
//! Per batch the flow is: load `tw` (from `cw` for the batch's classes, zero
//! elsewhere), train, then consolidate the batch classes back into `cw`.
//! Consolidation subtracts the scalar mean of all `tw` components across the
//! batch-class rows (bias included) — logits are shift-invariant under
//! softmax, and removing the common level lets rows trained in different
//! batches coexist on one scale — and blends with the previous `cw` using a
//! weight `sqrt(past_j / cur_j)` that grows with how much evidence the old
//! consolidated row already absorbed:
//!
//! ```text
//! wpast_j = sqrt(past_j / cur_j)
//! cw[j]  <- (cw[j] * wpast_j + (tw[j] - avg(tw))) / (wpast_j + 1)
//! past_j <- past_j + cur_j
//! ```
//!
//! The overwrite variant (`consolidate_overwrite`) simply stores
//! `tw[j] - avg(tw)`; with fresh classes (`past_j = 0`) the blending rule
//! reduces to it exactly.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::nn::{loss, Network};
use crate::tensor::Tensor;

/// Per-class cumulative training-pattern counters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassCounters {
    past: Vec<u64>,
}

impl ClassCounters {
    pub fn new(classes: usize) -> Self {
        ClassCounters {
            past: vec![0; classes],
        }
    }

    /// Patterns of class `j` consumed by all consolidations so far.
    pub fn past(&self, j: usize) -> u64 {
        self.past[j]
    }

    pub fn add(&mut self, j: usize, cur: u64) {
        self.past[j] += cur;
    }

    /// Classes with at least one consolidated pattern.
    pub fn seen(&self) -> Vec<usize> {
        (0..self.past.len()).filter(|&j| self.past[j] > 0).collect()
    }

    pub fn total(&self) -> u64 {
        self.past.iter().sum()
    }

    /// All per-class counts, indexed by class.
    pub fn counts(&self) -> &[u64] {
        &self.past
    }

    /// Rebuild counters from previously stored counts.
    pub fn from_counts(past: Vec<u64>) -> Self {
        ClassCounters { past }
    }
}

/// Consolidated head state for the CWR-family strategies.
#[derive(Debug, Clone)]
pub struct HeadState {
    classes: usize,
    /// Feature width of the head input.
    dim: usize,
    /// `[classes, dim + 1]` row-major; the trailing column is the bias.
    cw: Vec<f64>,
    pub counters: ClassCounters,
}

/// Count patterns per class in a label slice, in ascending class order.
pub fn class_counts(labels: &[usize]) -> BTreeMap<usize, u64> {
    let mut m = BTreeMap::new();
    for &y in labels {
        *m.entry(y).or_insert(0u64) += 1;
    }
    m
}

impl HeadState {
    /// All-zero consolidated weights for `classes` classes over `dim`
    /// features.
    pub fn new(classes: usize, dim: usize) -> Self {
        HeadState {
            classes,
            dim,
            cw: vec![0.0; classes * (dim + 1)],
            counters: ClassCounters::new(classes),
        }
    }

    /// Rebuild a head state from previously stored parts.
    pub fn from_parts(classes: usize, dim: usize, cw: Vec<f64>, past: Vec<u64>) -> Result<Self> {
        if cw.len() != classes * (dim + 1) || past.len() != classes {
            return Err(Error::Checkpoint(format!(
                "head state shape mismatch: {} classes x dim {} with {} weights, {} counters",
                classes,
                dim,
                cw.len(),
                past.len()
            )));
        }
        Ok(HeadState {
            classes,
            dim,
            cw,
            counters: ClassCounters::from_counts(past),
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Consolidated row of class `j` (weights then bias).
    pub fn row(&self, j: usize) -> &[f64] {
        &self.cw[j * (self.dim + 1)..(j + 1) * (self.dim + 1)]
    }

    /// The full `[classes, dim + 1]` consolidated matrix, row-major.
    pub fn cw_flat(&self) -> &[f64] {
        &self.cw
    }

    fn row_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.cw[j * (self.dim + 1)..(j + 1) * (self.dim + 1)]
    }

    /// Number of stored scalars (consolidated rows), for overhead accounting.
    pub fn stored_scalars(&self) -> usize {
        self.cw.len()
    }

    fn check_net(&self, net: &Network) -> Result<()> {
        if net.num_classes() != self.classes || net.feature_dim() != self.dim {
            return Err(Error::ShapeMismatch {
                layer: "head state".into(),
                expected: format!("head({}->{})", self.dim, self.classes),
                got: format!("head({}->{})", net.feature_dim(), net.num_classes()),
            });
        }
        Ok(())
    }

    fn check_classes<'a>(&self, batch_classes: impl Iterator<Item = &'a usize>) -> Result<()> {
        for &j in batch_classes {
            if j >= self.classes {
                return Err(Error::LabelOutOfRange {
                    label: j,
                    classes: self.classes,
                });
            }
        }
        Ok(())
    }

    /// Write the temporary weights for a new batch: `tw[j] = cw[j]` for the
    /// batch's classes, zero for every other row.
    pub fn load_tw(&self, net: &mut Network, batch_classes: &[usize]) -> Result<()> {
        self.check_net(net)?;
        self.check_classes(batch_classes.iter())?;
        let (classes, dim) = (self.classes, self.dim);
        let hr = net.head_range();
        let vals = net.values_mut();
        let head = &mut vals[hr.offset..hr.offset + hr.len];
        head.iter_mut().for_each(|v| *v = 0.0);
        for &j in batch_classes {
            let row = &self.cw[j * (dim + 1)..(j + 1) * (dim + 1)];
            head[j * dim..(j + 1) * dim].copy_from_slice(&row[..dim]);
            head[classes * dim + j] = row[dim];
        }
        Ok(())
    }

    /// Zero every temporary weight (the overwrite variant resets the whole
    /// output layer before each batch).
    pub fn load_zero_tw(&self, net: &mut Network) -> Result<()> {
        self.check_net(net)?;
        let hr = net.head_range();
        let vals = net.values_mut();
        vals[hr.offset..hr.offset + hr.len]
            .iter_mut()
            .for_each(|v| *v = 0.0);
        Ok(())
    }

    /// Read the trained temporary row of class `j` from the network head.
    fn read_tw_row(&self, net: &Network, j: usize) -> Vec<f64> {
        let (classes, dim) = (self.classes, self.dim);
        let hr = net.head_range();
        let head = &net.params().values()[hr.offset..hr.offset + hr.len];
        let mut row = Vec::with_capacity(dim + 1);
        row.extend_from_slice(&head[j * dim..(j + 1) * dim]);
        row.push(head[classes * dim + j]);
        row
    }

    /// Scalar mean over all components (weights and biases) of the
    /// batch-class temporary rows.
    fn tw_mean(&self, net: &Network, batch_classes: &[usize]) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for &j in batch_classes {
            let row = self.read_tw_row(net, j);
            sum += row.iter().sum::<f64>();
            count += row.len();
        }
        sum / count as f64
    }

    /// Evidence-weighted consolidation of the batch classes.
    ///
    /// `batch_counts` maps each class trained in this batch to its pattern
    /// count (`cur_j > 0`). Updates `cw` and the `past` counters.
    pub fn consolidate_blend(
        &mut self,
        net: &Network,
        batch_counts: &BTreeMap<usize, u64>,
    ) -> Result<()> {
        self.check_net(net)?;
        self.check_classes(batch_counts.keys())?;
        if batch_counts.is_empty() {
            return Err(Error::Protocol("consolidation over an empty batch".into()));
        }
        for (&j, &cur) in batch_counts {
            if cur == 0 {
                return Err(Error::Protocol(format!(
                    "class {j} claimed by the batch but has zero patterns"
                )));
            }
        }
        let batch_classes: Vec<usize> = batch_counts.keys().copied().collect();
        let avg = self.tw_mean(net, &batch_classes);
        for (&j, &cur) in batch_counts {
            let tw = self.read_tw_row(net, j);
            let wpast = (self.counters.past(j) as f64 / cur as f64).sqrt();
            let row = self.row_mut(j);
            for (c, t) in row.iter_mut().zip(&tw) {
                *c = (*c * wpast + (t - avg)) / (wpast + 1.0);
            }
            self.counters.add(j, cur);
        }
        Ok(())
    }

    /// Overwrite consolidation: `cw[j] = tw[j] - avg(tw)` for batch classes.
    pub fn consolidate_overwrite(
        &mut self,
        net: &Network,
        batch_counts: &BTreeMap<usize, u64>,
    ) -> Result<()> {
        self.check_net(net)?;
        self.check_classes(batch_counts.keys())?;
        if batch_counts.is_empty() {
            return Err(Error::Protocol("consolidation over an empty batch".into()));
        }
        let batch_classes: Vec<usize> = batch_counts.keys().copied().collect();
        let avg = self.tw_mean(net, &batch_classes);
        for (&j, &cur) in batch_counts {
            if cur == 0 {
                return Err(Error::Protocol(format!(
                    "class {j} claimed by the batch but has zero patterns"
                )));
            }
            let tw = self.read_tw_row(net, j);
            let row = self.row_mut(j);
            for (c, t) in row.iter_mut().zip(&tw) {
                *c = t - avg;
            }
            self.counters.add(j, cur);
        }
        Ok(())
    }

    /// Class scores of one feature vector under the consolidated weights.
    pub fn scores(&self, features: &[f64]) -> Vec<f64> {
        let dim = self.dim;
        (0..self.classes)
            .map(|j| {
                let row = self.row(j);
                let mut acc = row[dim];
                for i in 0..dim {
                    acc += row[i] * features[i];
                }
                acc
            })
            .collect()
    }

    /// Predictions (argmax of consolidated scores, ties to the lowest class
    /// index) for a `[n, dim]` feature batch.
    pub fn predict(&self, features: &Tensor) -> Vec<usize> {
        (0..features.batch())
            .map(|i| loss::argmax(&self.scores(features.item(i))))
            .collect()
    }
}
