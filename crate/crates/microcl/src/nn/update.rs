//! Parameter update rules: plain SGD, importance-modulated SGD, and the
//! quadratic-penalty (anchored) update.
//!
//! All rules honor the per-parameter learning-rate scale: the effective step
//! for parameter `k` is multiplied by `lr_scale[k]`, and a scale of exactly
//! zero skips the write entirely, so frozen parameters are bit-identical
//! after any number of steps under any rule. Gradients are validated to be
//! finite before anything is written; a non-finite gradient aborts the step
//! with a diagnostic naming the offending parameter and layer.
//!
//! Plain SGD, no momentum: `theta' = theta - eta * lr_scale * g`.

use super::{Network, ParamRange};
use crate::error::{Error, Result};

/// Plain SGD over every parameter.
pub fn sgd_step(net: &mut Network, grads: &[f64], eta: f64) -> Result<()> {
    let all = ParamRange {
        offset: 0,
        len: net.param_count(),
    };
    sgd_step_range(net, grads, eta, all)
}

/// Plain SGD restricted to one flat range (e.g. the head layer only).
pub fn sgd_step_range(net: &mut Network, grads: &[f64], eta: f64, range: ParamRange) -> Result<()> {
    check_grads(net, grads, range)?;
    let scales = net.params().lr_scale().to_vec();
    let values = net.values_mut();
    for k in range.offset..range.end() {
        let s = scales[k];
        if s == 0.0 {
            continue;
        }
        values[k] -= eta * s * grads[k];
    }
    Ok(())
}

/// Importance-modulated SGD over one flat range:
///
/// ```text
/// theta'_k = theta_k - eta * lr_scale_k * (1 - F_k / max_f) * g_k
/// ```
///
/// A parameter at the importance ceiling (`F_k = max_f`) receives a zero
/// factor and is skipped outright, i.e. it is frozen bit-exactly. The factor
/// combines multiplicatively with `lr_scale`.
pub fn lr_modulated_update(
    net: &mut Network,
    grads: &[f64],
    eta: f64,
    importance: &[f64],
    max_f: f64,
    range: ParamRange,
) -> Result<()> {
    if !(max_f > 0.0) {
        return Err(Error::Config(format!(
            "importance ceiling max_f must be positive, got {max_f}"
        )));
    }
    if importance.len() != net.param_count() {
        return Err(Error::ShapeMismatch {
            layer: "importance".into(),
            expected: format!("{} values", net.param_count()),
            got: format!("{}", importance.len()),
        });
    }
    check_grads(net, grads, range)?;
    let scales = net.params().lr_scale().to_vec();
    let values = net.values_mut();
    for k in range.offset..range.end() {
        let factor = (1.0 - importance[k] / max_f).clamp(0.0, 1.0);
        let s = scales[k] * factor;
        if s == 0.0 {
            continue;
        }
        values[k] -= eta * s * grads[k];
    }
    Ok(())
}

/// Anchored quadratic-penalty update over every parameter:
///
/// ```text
/// theta'_k = theta_k - eta * lr_scale_k * (g_k + lambda * F_k * (theta_k - anchor_k))
/// ```
///
/// `grads` must be pure cross-entropy gradients; the penalty term is applied
/// analytically here rather than through the backward pass.
pub fn ewc_update(
    net: &mut Network,
    grads: &[f64],
    eta: f64,
    importance: &[f64],
    anchor: &[f64],
    lambda: f64,
) -> Result<()> {
    let p = net.param_count();
    if importance.len() != p || anchor.len() != p {
        return Err(Error::ShapeMismatch {
            layer: "importance/anchor".into(),
            expected: format!("{p} values"),
            got: format!("{} / {}", importance.len(), anchor.len()),
        });
    }
    let all = ParamRange { offset: 0, len: p };
    check_grads(net, grads, all)?;
    let scales = net.params().lr_scale().to_vec();
    let values = net.values_mut();
    for k in 0..p {
        let s = scales[k];
        if s == 0.0 {
            continue;
        }
        let pull = lambda * importance[k] * (values[k] - anchor[k]);
        values[k] -= eta * s * (grads[k] + pull);
    }
    Ok(())
}

/// The penalized loss value `L = L_cross + (lambda / 2) * sum_k F_k (theta_k - anchor_k)^2`.
///
/// Used for reporting; the training path applies the penalty gradient
/// analytically in [`ewc_update`].
pub fn penalized_loss(
    net: &Network,
    cross_entropy: f64,
    importance: &[f64],
    anchor: &[f64],
    lambda: f64,
) -> Result<f64> {
    let p = net.param_count();
    if importance.len() != p || anchor.len() != p {
        return Err(Error::ShapeMismatch {
            layer: "importance/anchor".into(),
            expected: format!("{p} values"),
            got: format!("{} / {}", importance.len(), anchor.len()),
        });
    }
    let values = net.params().values();
    let mut penalty = 0.0;
    for k in 0..p {
        let d = values[k] - anchor[k];
        penalty += importance[k] * d * d;
    }
    Ok(cross_entropy + 0.5 * lambda * penalty)
}

fn check_grads(net: &Network, grads: &[f64], range: ParamRange) -> Result<()> {
    if grads.len() != net.param_count() {
        return Err(Error::ShapeMismatch {
            layer: "gradients".into(),
            expected: format!("{} values", net.param_count()),
            got: format!("{}", grads.len()),
        });
    }
    for k in range.offset..range.end() {
        if !grads[k].is_finite() {
            let layer = net.params().layer_of(k);
            return Err(Error::NonFinite {
                what: "gradient",
                index: k,
                layer: net.specs()[layer].name(),
            });
        }
    }
    Ok(())
}
