//! Batch normalization and batch renormalization.
//!
//! Both normalizers share one kernel. For a mini-batch slice of channel `c`
//! with mean `mu_mb` and standard deviation `s_mb = sqrt(var_mb + eps)`:
//!
//! ```text
//! xhat = (x - mu_mb) / s_mb          z = xhat * r + d          y = gamma * z + beta
//! ```
//!
//! Plain batch norm fixes `r = 1, d = 0`. Batch renorm computes the
//! correction terms from the moving moments `(mu, sigma)` and clips them:
//!
//! ```text
//! r = clip(s_mb / sigma, 1/r_max, r_max)      d = clip((mu_mb - mu) / sigma, -d_max, d_max)
//! ```
//!
//! so with `r_max = 1, d_max = 0` batch renorm degenerates to batch norm
//! exactly (same code path, same floating-point operations). `r` and `d` are
//! treated as constants in the backward pass (stop-gradient); the moving
//! moments are updated once per training iteration by an explicit call to
//! [`NormState::update_moments`], never inside the forward pass itself.
//!
//! The moving moments track the standard deviation directly (an EMA of
//! `s_mb`, not of the variance) because the correction terms are ratios of
//! standard deviations. The first update assigns the mini-batch moments
//! outright; later updates blend with `alpha_past`. At evaluation time inputs
//! are normalized by the moving moments alone; channels that have never been
//! updated fall back to `(mu, sigma) = (0, 1)` so a freshly initialized
//! network can still be evaluated (the "batch 0" row of a run).

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Which normalizer a layer runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    /// Plain batch normalization (`r = 1, d = 0` always).
    Batch,
    /// Batch renormalization with clipped correction terms.
    BatchRenorm,
}

/// Per-layer normalization state: moving moments plus the current clip knobs.
///
/// The learned per-channel scale/shift (`gamma`, `beta`) live in the
/// network's flat parameter set like any other weight and are not stored
/// here; this struct owns only the non-trainable state.
#[derive(Debug, Clone)]
pub struct NormState {
    /// Moving per-channel mean.
    pub mu: Vec<f64>,
    /// Moving per-channel standard deviation (EMA of `sqrt(var_mb + eps)`).
    pub sigma: Vec<f64>,
    /// False until the first `update_moments` call.
    pub initialized: bool,
    /// Variance floor inside the square root.
    pub eps: f64,
    /// Clip bound for `r` (must be >= 1).
    pub r_max: f64,
    /// Clip bound for `|d|` (must be >= 0).
    pub d_max: f64,
    /// Moving-moment retention factor in `[0, 1]`.
    pub alpha_past: f64,
    /// When set, forward uses these `(r, d)` verbatim instead of deriving
    /// them from moments. This realizes the stop-gradient semantics for
    /// finite-difference validation: pin the corrections observed in one
    /// forward pass, then perturb parameters freely.
    pub pinned_rd: Option<(Vec<f64>, Vec<f64>)>,
}

/// Per-forward-pass cache needed by the backward pass and moment update.
#[derive(Debug, Clone)]
pub struct NormCache {
    pub mu_mb: Vec<f64>,
    pub s_mb: Vec<f64>,
    pub r: Vec<f64>,
    pub d: Vec<f64>,
    /// Normalized activations `(x - mu_mb)/s_mb`, same layout as the input.
    pub xhat: Vec<f64>,
    pub channels: usize,
}

pub const DEFAULT_EPS: f64 = 1e-5;

impl NormState {
    pub fn new(channels: usize) -> Self {
        NormState {
            mu: vec![0.0; channels],
            sigma: vec![0.0; channels],
            initialized: false,
            eps: DEFAULT_EPS,
            r_max: 1.0,
            d_max: 0.0,
            alpha_past: 0.99,
            pinned_rd: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.mu.len()
    }

    /// Set the clip bounds and retention factor (typically from a
    /// [`BrnSchedule`] once per training iteration).
    pub fn set_correction_limits(&mut self, r_max: f64, d_max: f64, alpha_past: f64) -> Result<()> {
        if !(r_max >= 1.0) {
            return Err(Error::Config(format!("r_max must be >= 1, got {r_max}")));
        }
        if !(d_max >= 0.0) {
            return Err(Error::Config(format!("d_max must be >= 0, got {d_max}")));
        }
        if !(0.0..=1.0).contains(&alpha_past) {
            return Err(Error::Config(format!(
                "alpha_past must lie in [0, 1], got {alpha_past}"
            )));
        }
        self.r_max = r_max;
        self.d_max = d_max;
        self.alpha_past = alpha_past;
        Ok(())
    }

    /// Pin `(r, d)` for stop-gradient validation.
    pub fn pin_rd(&mut self, r: Vec<f64>, d: Vec<f64>) {
        self.pinned_rd = Some((r, d));
    }

    pub fn clear_pin(&mut self) {
        self.pinned_rd = None;
    }

    /// Blend the mini-batch moments of `cache` into the moving moments.
    ///
    /// First call assigns; subsequent calls apply
    /// `m <- alpha_past * m + (1 - alpha_past) * m_mb`, so `alpha_past = 1`
    /// freezes initialized moments and `alpha_past = 0` tracks the latest
    /// mini-batch exactly.
    pub fn update_moments(&mut self, cache: &NormCache) {
        if !self.initialized {
            self.mu.copy_from_slice(&cache.mu_mb);
            self.sigma.copy_from_slice(&cache.s_mb);
            self.initialized = true;
            return;
        }
        let a = self.alpha_past;
        for c in 0..self.mu.len() {
            self.mu[c] = a * self.mu[c] + (1.0 - a) * cache.mu_mb[c];
            self.sigma[c] = a * self.sigma[c] + (1.0 - a) * cache.s_mb[c];
        }
    }
}

/// Compute the clipped correction terms for one channel.
///
/// Exposed so the clip law can be exercised directly: the results always
/// satisfy `1/r_max <= r <= r_max` and `|d| <= d_max`.
pub fn correction_terms(
    s_mb: f64,
    mu_mb: f64,
    mu: f64,
    sigma: f64,
    r_max: f64,
    d_max: f64,
) -> (f64, f64) {
    let r = (s_mb / sigma).clamp(1.0 / r_max, r_max);
    let d = ((mu_mb - mu) / sigma).clamp(-d_max, d_max);
    (r, d)
}

/// Training-mode forward pass (shared by both normalizer kinds).
///
/// `x` has shape `[n, channels, spatial...]` (or `[n, channels]` for dense
/// features). `gamma`/`beta` hold one scale/shift per channel. Statistics are
/// computed per channel over the batch and spatial axes; the biased variance
/// is used, with `eps` inside the square root.
///
/// Errors if batch renorm needs the moving moments before any update has
/// happened (running with `r_max > 1` or `d_max > 0` before warm-up is a
/// configuration error).
pub fn forward_train(
    x: &Tensor,
    kind: NormKind,
    gamma: &[f64],
    beta: &[f64],
    state: &NormState,
) -> Result<(Tensor, NormCache)> {
    let channels = gamma.len();
    let (n, spatial) = check_layout(x, channels)?;
    let group = n * spatial; // elements per channel
    if group == 0 {
        return Err(Error::ShapeMismatch {
            layer: "norm".into(),
            expected: "non-empty mini-batch".into(),
            got: "0 elements".into(),
        });
    }

    let mut mu_mb = vec![0.0; channels];
    let mut s_mb = vec![0.0; channels];
    for c in 0..channels {
        let mut sum = 0.0;
        for_each_channel_value(x, c, channels, spatial, |v| sum += v);
        let mean = sum / group as f64;
        let mut var = 0.0;
        for_each_channel_value(x, c, channels, spatial, |v| {
            let e = v - mean;
            var += e * e;
        });
        mu_mb[c] = mean;
        s_mb[c] = (var / group as f64 + state.eps).sqrt();
    }

    let (r, d) = match (&state.pinned_rd, kind) {
        (Some((pr, pd)), _) => (pr.clone(), pd.clone()),
        (None, NormKind::Batch) => (vec![1.0; channels], vec![0.0; channels]),
        (None, NormKind::BatchRenorm) => {
            if state.r_max == 1.0 && state.d_max == 0.0 {
                // Warm-up: corrections are forced to identity, the moving
                // moments are not consulted (they may not exist yet).
                (vec![1.0; channels], vec![0.0; channels])
            } else {
                if !state.initialized {
                    return Err(Error::Config(
                        "batch renorm correction requested before any moment update \
                         (run a warm-up with r_max = 1, d_max = 0 first)"
                            .into(),
                    ));
                }
                let mut r = vec![0.0; channels];
                let mut d = vec![0.0; channels];
                for c in 0..channels {
                    let (rc, dc) = correction_terms(
                        s_mb[c],
                        mu_mb[c],
                        state.mu[c],
                        state.sigma[c],
                        state.r_max,
                        state.d_max,
                    );
                    r[c] = rc;
                    d[c] = dc;
                }
                (r, d)
            }
        }
    };

    let mut xhat = vec![0.0; x.len()];
    let mut out = Tensor::zeros(x.shape());
    {
        let xd = x.data();
        let od = out.data_mut();
        for i in 0..xd.len() {
            let c = channel_of(i, channels, spatial);
            let h = (xd[i] - mu_mb[c]) / s_mb[c];
            xhat[i] = h;
            od[i] = gamma[c] * (h * r[c] + d[c]) + beta[c];
        }
    }

    Ok((
        out,
        NormCache {
            mu_mb,
            s_mb,
            r,
            d,
            xhat,
            channels,
        },
    ))
}

/// Evaluation-mode forward pass: normalize by the moving moments.
///
/// Uninitialized state falls back to `(mu, sigma) = (0, 1)` so an untouched
/// network can be evaluated.
pub fn forward_eval(x: &Tensor, gamma: &[f64], beta: &[f64], state: &NormState) -> Result<Tensor> {
    let channels = gamma.len();
    let (_, spatial) = check_layout(x, channels)?;
    let mut out = Tensor::zeros(x.shape());
    let xd = x.data();
    let od = out.data_mut();
    for i in 0..xd.len() {
        let c = channel_of(i, channels, spatial);
        let (m, s) = if state.initialized {
            (state.mu[c], state.sigma[c])
        } else {
            (0.0, 1.0)
        };
        od[i] = gamma[c] * ((xd[i] - m) / s) + beta[c];
    }
    Ok(out)
}

/// Backward pass for the training-mode forward.
///
/// `r` and `d` are constants (stop-gradient); the mini-batch moments are
/// differentiated through. Returns `(dx, dgamma, dbeta)`.
pub fn backward(
    delta: &Tensor,
    cache: &NormCache,
    gamma: &[f64],
) -> (Tensor, Vec<f64>, Vec<f64>) {
    let channels = cache.channels;
    let spatial = delta.item_len() / channels;
    let n = delta.batch();
    let group = (n * spatial) as f64;

    let mut dgamma = vec![0.0; channels];
    let mut dbeta = vec![0.0; channels];
    // Per-channel reductions over dxhat and dxhat * xhat.
    let mut sum_dh = vec![0.0; channels];
    let mut sum_dh_h = vec![0.0; channels];

    let dd = delta.data();
    for i in 0..dd.len() {
        let c = channel_of(i, channels, spatial);
        let z = cache.xhat[i] * cache.r[c] + cache.d[c];
        dgamma[c] += dd[i] * z;
        dbeta[c] += dd[i];
        let dh = dd[i] * gamma[c] * cache.r[c];
        sum_dh[c] += dh;
        sum_dh_h[c] += dh * cache.xhat[i];
    }

    let mut dx = Tensor::zeros(delta.shape());
    let dxd = dx.data_mut();
    for i in 0..dd.len() {
        let c = channel_of(i, channels, spatial);
        let dh = dd[i] * gamma[c] * cache.r[c];
        dxd[i] =
            (dh - sum_dh[c] / group - cache.xhat[i] * sum_dh_h[c] / group) / cache.s_mb[c];
    }
    (dx, dgamma, dbeta)
}

fn check_layout(x: &Tensor, channels: usize) -> Result<(usize, usize)> {
    let n = x.batch();
    let item = x.item_len();
    if channels == 0 || item == 0 || !item.is_multiple_of(channels) {
        return Err(Error::ShapeMismatch {
            layer: "norm".into(),
            expected: format!("item size divisible by {channels} channels"),
            got: format!("item size {item}"),
        });
    }
    Ok((n, item / channels))
}

#[inline]
fn channel_of(flat: usize, channels: usize, spatial: usize) -> usize {
    (flat / spatial) % channels
}

fn for_each_channel_value(
    x: &Tensor,
    c: usize,
    channels: usize,
    spatial: usize,
    mut f: impl FnMut(f64),
) {
    let d = x.data();
    let item = channels * spatial;
    for n in 0..x.batch() {
        let base = n * item + c * spatial;
        for s in 0..spatial {
            f(d[base + s]);
        }
    }
}

// ---------------------------------------------------------------------------
// Correction-limit schedule
// ---------------------------------------------------------------------------

/// Schedule for the renorm clip limits and moment retention across a run.
///
/// The first training batch starts with a warm-up (`r_max = 1, d_max = 0`,
/// i.e. plain batch norm) so the moving moments can form, then ramps the
/// limits linearly to `(batch1_r_max, batch1_d_max)` over `ramp_iters`
/// iterations. Every later batch uses fixed limits that depend on how small
/// the incremental batches are (smaller batches need a laxer clip because
/// their mini-batch moments drift further from the global ones), and a much
/// slower moment update.
#[derive(Debug, Clone, PartialEq)]
pub struct BrnSchedule {
    pub warmup_iters: u64,
    /// Length of the linear ramp after warm-up; 0 jumps straight to the
    /// batch-1 targets.
    pub ramp_iters: u64,
    pub batch1_r_max: f64,
    pub batch1_d_max: f64,
    pub later_r_max: f64,
    pub later_d_max: f64,
    pub alpha_batch1: f64,
    pub alpha_later: f64,
}

impl BrnSchedule {
    /// Preset for a given number of training sessions per incremental batch
    /// (the 79 / 196 / 391-batch protocols group 5 / 2 / 1 sessions per
    /// batch).
    pub fn for_sessions_per_batch(sessions: usize) -> Self {
        let (r, d) = match sessions {
            s if s >= 5 => (1.25, 0.5),
            2..=4 => (1.25, 0.5),
            _ => (1.5, 2.5), // single-session batches need the laxest clips
        };
        BrnSchedule {
            warmup_iters: 48,
            ramp_iters: 48,
            batch1_r_max: 3.0,
            batch1_d_max: 5.0,
            later_r_max: r,
            later_d_max: d,
            alpha_batch1: 0.99,
            alpha_later: 0.9999,
        }
    }

    /// Limits and retention for a given 1-based batch index and 0-based
    /// iteration within that batch.
    pub fn params_at(&self, batch_index: usize, iteration: u64) -> (f64, f64, f64) {
        if batch_index <= 1 {
            let a = self.alpha_batch1;
            if iteration < self.warmup_iters {
                (1.0, 0.0, a)
            } else if iteration < self.warmup_iters + self.ramp_iters {
                let t = (iteration - self.warmup_iters + 1) as f64 / self.ramp_iters as f64;
                (
                    1.0 + t * (self.batch1_r_max - 1.0),
                    t * self.batch1_d_max,
                    a,
                )
            } else {
                (self.batch1_r_max, self.batch1_d_max, a)
            }
        } else {
            (self.later_r_max, self.later_d_max, self.alpha_later)
        }
    }
}
