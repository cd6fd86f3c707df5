//! Per-weight importance tracking for regularization-based strategies.
//!
//! One `ImportanceState` holds a single merged importance vector `F` (one
//! scalar per parameter) plus the per-batch scratch needed to compute the
//! batch's contribution `omega`, from one of two sources:
//!
//! * `SquaredGradients` — `omega_k` is the mean of `g_k^2` over the batch's
//!   SGD iterations (a diagonal empirical-Fisher estimate). This source also
//!   stores an anchor copy of the parameters at consolidation time, for the
//!   quadratic attraction penalty.
//! * `PathIntegral` — `omega_k` is the realized loss-reduction trajectory
//!   `sum(-g_k * delta_theta_k)` divided by the squared total displacement
//!   (plus damping `xi`), clamped at zero. No anchor is kept: strategies
//!   built on this source spend the importance on learning-rate modulation
//!   instead of a penalty.
//!
//! At batch end `fisher_consolidate` merges the contribution into the single
//! running vector,
//!
//! ```text
//! F <- clip(w_past * F + w_cur * omega, 0, max_f)
//! ```
//!
//! so memory stays constant in the number of batches.

use crate::error::{Error, Result};

/// Where a batch's importance contribution comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherSource {
    /// Mean squared gradient over the batch's iterations (keeps an anchor).
    SquaredGradients,
    /// Realized path integral of loss reduction (no anchor).
    PathIntegral,
}

/// Damping added to the squared displacement in the path-integral source.
pub const PATH_INTEGRAL_DAMPING: f64 = 1e-3;

#[derive(Debug, Clone)]
pub struct ImportanceState {
    source: FisherSource,
    /// Merged importance, always within `[0, max_f]`.
    f: Vec<f64>,
    /// Parameter copy the quadratic penalty pulls toward
    /// (`SquaredGradients` source only).
    anchor: Option<Vec<f64>>,
    /// Parameters at the start of the current batch.
    theta_start: Vec<f64>,
    /// Path-integral accumulator `sum(-g * realized step)`.
    trajectory: Vec<f64>,
    /// Sum of squared gradients over the batch's iterations.
    sq_sum: Vec<f64>,
    /// Iterations recorded in the current batch.
    steps: u64,
    in_batch: bool,
    pub max_f: f64,
    pub w_past: f64,
    pub w_cur: f64,
}

impl ImportanceState {
    pub fn new(
        param_count: usize,
        source: FisherSource,
        max_f: f64,
        w_past: f64,
        w_cur: f64,
    ) -> Result<Self> {
        if !(max_f > 0.0) {
            return Err(Error::Config(format!(
                "max_f must be positive, got {max_f}"
            )));
        }
        if !(w_past >= 0.0) || !(w_cur >= 0.0) {
            return Err(Error::Config(format!(
                "merge weights must be non-negative, got w_past={w_past} w_cur={w_cur}"
            )));
        }
        Ok(ImportanceState {
            source,
            f: vec![0.0; param_count],
            anchor: None,
            theta_start: Vec::new(),
            trajectory: Vec::new(),
            sq_sum: Vec::new(),
            steps: 0,
            in_batch: false,
            max_f,
            w_past,
            w_cur,
        })
    }

    /// Rebuild an importance state from previously stored parts. The
    /// mid-batch scratch (trajectory, squared-gradient sums) is not part of
    /// a checkpoint; restored state always sits between batches.
    pub fn from_parts(
        source: FisherSource,
        f: Vec<f64>,
        anchor: Option<Vec<f64>>,
        max_f: f64,
        w_past: f64,
        w_cur: f64,
    ) -> Result<Self> {
        let mut st = ImportanceState::new(f.len(), source, max_f, w_past, w_cur)?;
        if let Some(a) = &anchor {
            if a.len() != f.len() {
                return Err(Error::Checkpoint(format!(
                    "anchor length {} does not match importance length {}",
                    a.len(),
                    f.len()
                )));
            }
        }
        st.f = f;
        st.anchor = anchor;
        Ok(st)
    }

    pub fn source(&self) -> FisherSource {
        self.source
    }

    /// Merged importance vector.
    pub fn f(&self) -> &[f64] {
        &self.f
    }

    /// Anchor parameters, if this source keeps one and at least one batch
    /// has been consolidated.
    pub fn anchor(&self) -> Option<&[f64]> {
        self.anchor.as_deref()
    }

    /// Stored scalars beyond the model itself, for overhead accounting:
    /// the merged importance vector plus the anchor when present.
    pub fn importance_scalar_count(&self) -> usize {
        self.f.len()
    }

    pub fn anchor_scalar_count(&self) -> usize {
        self.anchor.as_ref().map_or(0, Vec::len)
    }

    /// Begin a batch: snapshot the starting parameters and clear scratch.
    pub fn begin_batch(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.f.len() {
            return Err(Error::ShapeMismatch {
                layer: "importance state".into(),
                expected: format!("{} parameters", self.f.len()),
                got: format!("{}", params.len()),
            });
        }
        self.theta_start = params.to_vec();
        self.trajectory = vec![0.0; params.len()];
        self.sq_sum = vec![0.0; params.len()];
        self.steps = 0;
        self.in_batch = true;
        Ok(())
    }

    /// Record one SGD iteration: the loss gradient and the realized
    /// parameter step (`after - before`, which a modulated or frozen update
    /// may have shrunk to zero — the trajectory uses what actually moved).
    pub fn record_step(&mut self, grads: &[f64], before: &[f64], after: &[f64]) -> Result<()> {
        if !self.in_batch {
            return Err(Error::Config(
                "record_step called outside begin_batch/fisher_consolidate".into(),
            ));
        }
        if grads.len() != self.f.len() || before.len() != self.f.len() || after.len() != self.f.len()
        {
            return Err(Error::ShapeMismatch {
                layer: "importance state".into(),
                expected: format!("{} parameters", self.f.len()),
                got: format!("{}/{}/{}", grads.len(), before.len(), after.len()),
            });
        }
        match self.source {
            FisherSource::PathIntegral => {
                for k in 0..grads.len() {
                    self.trajectory[k] -= grads[k] * (after[k] - before[k]);
                }
            }
            FisherSource::SquaredGradients => {
                for k in 0..grads.len() {
                    self.sq_sum[k] += grads[k] * grads[k];
                }
            }
        }
        self.steps += 1;
        Ok(())
    }

    /// End-of-batch consolidation: fold the batch contribution into `F`,
    /// clip to `[0, max_f]`, store the anchor (squared-gradient source), and
    /// clear the scratch.
    pub fn fisher_consolidate(&mut self, params_end: &[f64]) -> Result<()> {
        if !self.in_batch {
            return Err(Error::Config(
                "fisher_consolidate called without a begin_batch".into(),
            ));
        }
        if params_end.len() != self.f.len() {
            return Err(Error::ShapeMismatch {
                layer: "importance state".into(),
                expected: format!("{} parameters", self.f.len()),
                got: format!("{}", params_end.len()),
            });
        }
        for k in 0..self.f.len() {
            let omega = match self.source {
                FisherSource::PathIntegral => {
                    let total = params_end[k] - self.theta_start[k];
                    (self.trajectory[k] / (total * total + PATH_INTEGRAL_DAMPING)).max(0.0)
                }
                FisherSource::SquaredGradients => {
                    if self.steps == 0 {
                        0.0
                    } else {
                        self.sq_sum[k] / self.steps as f64
                    }
                }
            };
            self.f[k] = (self.w_past * self.f[k] + self.w_cur * omega).clamp(0.0, self.max_f);
        }
        if self.source == FisherSource::SquaredGradients {
            self.anchor = Some(params_end.to_vec());
        }
        self.theta_start.clear();
        self.trajectory.clear();
        self.sq_sum.clear();
        self.steps = 0;
        self.in_batch = false;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pi_state(n: usize, max_f: f64) -> ImportanceState {
        ImportanceState::new(n, FisherSource::PathIntegral, max_f, 0.5, 0.5).unwrap()
    }

    /// A plain SGD step contributes +eta * g^2 to the trajectory:
    /// g = 2, eta = 0.1 -> delta = -0.2 -> -g * delta = 0.4.
    #[test]
    fn sgd_step_contributes_eta_g_squared() {
        let mut s = pi_state(1, 1e9);
        s.begin_batch(&[1.0]).unwrap();
        s.record_step(&[2.0], &[1.0], &[0.8]).unwrap();
        assert!((s.trajectory[0] - 0.4).abs() < 1e-15);
    }

    /// Full path-integral consolidation with known numbers:
    /// trajectory = 0.4, total displacement = -0.2, xi = 1e-3,
    /// F = 0.5 * 0 + 0.5 * 0.4 / (0.04 + 0.001).
    #[test]
    fn path_integral_consolidation_matches_closed_form() {
        let mut s = pi_state(1, 1e9);
        s.begin_batch(&[1.0]).unwrap();
        s.record_step(&[2.0], &[1.0], &[0.8]).unwrap();
        s.fisher_consolidate(&[0.8]).unwrap();
        let expect = 0.5 * (0.4 / (0.04 + PATH_INTEGRAL_DAMPING));
        assert!((s.f()[0] - expect).abs() < 1e-12, "{} vs {expect}", s.f()[0]);
        assert!(s.anchor().is_none());
    }

    /// Negative realized trajectory (loss went up along that weight) clamps
    /// to zero rather than producing negative importance.
    #[test]
    fn negative_trajectory_clamps_to_zero() {
        let mut s = pi_state(1, 1e9);
        s.begin_batch(&[0.0]).unwrap();
        // Gradient positive while the weight moved up: -g * delta < 0.
        s.record_step(&[1.0], &[0.0], &[0.5]).unwrap();
        s.fisher_consolidate(&[0.5]).unwrap();
        assert_eq!(s.f()[0], 0.0);
    }

    /// Contributions above max_f are clipped to exactly max_f.
    #[test]
    fn clip_at_max_f() {
        let mut s = ImportanceState::new(1, FisherSource::PathIntegral, 0.001, 0.5, 0.5).unwrap();
        s.begin_batch(&[1.0]).unwrap();
        s.record_step(&[10.0], &[1.0], &[0.0]).unwrap();
        s.fisher_consolidate(&[0.0]).unwrap();
        assert_eq!(s.f()[0], 0.001);
    }

    /// Squared-gradient source: mean of g^2 over iterations, anchor stored.
    #[test]
    fn squared_gradient_mean_and_anchor() {
        let mut s =
            ImportanceState::new(2, FisherSource::SquaredGradients, 1e9, 0.0, 1.0).unwrap();
        s.begin_batch(&[0.0, 0.0]).unwrap();
        s.record_step(&[1.0, 0.0], &[0.0, 0.0], &[-0.1, 0.0]).unwrap();
        s.record_step(&[3.0, 0.0], &[-0.1, 0.0], &[-0.4, 0.0]).unwrap();
        s.fisher_consolidate(&[-0.4, 7.0]).unwrap();
        // mean(1, 9) = 5
        assert!((s.f()[0] - 5.0).abs() < 1e-15);
        assert_eq!(s.f()[1], 0.0);
        assert_eq!(s.anchor().unwrap(), &[-0.4, 7.0]);
    }

    /// The merge rule is w_past * F + w_cur * omega across batches.
    #[test]
    fn merge_uses_past_and_current_weights() {
        let mut s =
            ImportanceState::new(1, FisherSource::SquaredGradients, 1e9, 0.5, 0.5).unwrap();
        s.begin_batch(&[0.0]).unwrap();
        s.record_step(&[2.0], &[0.0], &[0.0]).unwrap();
        s.fisher_consolidate(&[0.0]).unwrap();
        assert!((s.f()[0] - 2.0).abs() < 1e-15); // 0.5*0 + 0.5*4
        s.begin_batch(&[0.0]).unwrap();
        s.record_step(&[4.0], &[0.0], &[0.0]).unwrap();
        s.fisher_consolidate(&[0.0]).unwrap();
        assert!((s.f()[0] - 9.0).abs() < 1e-15); // 0.5*2 + 0.5*16
    }

    /// Frozen parameters never accumulate importance under the path
    /// integral: zero realized step means zero trajectory.
    #[test]
    fn frozen_parameter_accumulates_nothing() {
        let mut s = pi_state(2, 1e9);
        s.begin_batch(&[1.0, 1.0]).unwrap();
        // Parameter 1 has a gradient but did not move.
        s.record_step(&[2.0, 5.0], &[1.0, 1.0], &[0.8, 1.0]).unwrap();
        s.fisher_consolidate(&[0.8, 1.0]).unwrap();
        assert_eq!(s.f()[1], 0.0);
        assert!(s.f()[0] > 0.0);
    }

    #[test]
    fn record_outside_batch_is_an_error() {
        let mut s = pi_state(1, 1.0);
        let err = s.record_step(&[1.0], &[0.0], &[0.0]).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn zero_batches_zero_importance() {
        let s = pi_state(3, 1.0);
        assert!(s.f().iter().all(|v| *v == 0.0));
        assert_eq!(s.anchor_scalar_count(), 0);
    }
}
