//! Empirical risk minimization: losses, Adam, and the training loop.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{LossKind, Network};
use crate::data::Matrix;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Loss value for a single prediction.
///
/// Squared: `(prediction - target)^2`. Logistic: `ln(1 + e^pred) -
/// target·pred` on a raw score, requiring a binary target.
pub fn loss_value(kind: LossKind, prediction: f64, target: f64) -> Result<f64> {
    match kind {
        LossKind::Squared => {
            let r = prediction - target;
            Ok(r * r)
        }
        LossKind::Logistic => {
            if target != 0.0 && target != 1.0 {
                return Err(Error::Domain(format!(
                    "logistic loss requires a binary target, got {target}"
                )));
            }
            Ok(softplus(prediction) - target * prediction)
        }
    }
}

/// d loss / d prediction. Callers must have validated logistic targets.
#[inline]
pub(crate) fn loss_grad(kind: LossKind, prediction: f64, target: f64) -> f64 {
    match kind {
        LossKind::Squared => 2.0 * (prediction - target),
        LossKind::Logistic => sigmoid(prediction) - target,
    }
}

/// Numerically stable `ln(1 + e^z)`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + libm::log1p(libm::exp(-z.abs()))
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + libm::exp(-z))
    } else {
        let e = libm::exp(z);
        e / (1.0 + e)
    }
}

/// Clamp a raw score to `[-bound, bound]`; the returned gate is the local
/// derivative of the clamp (0 outside, 1 inside).
#[inline]
pub(crate) fn apply_clip(raw: f64, clip: Option<f64>) -> (f64, f64) {
    match clip {
        Some(b) => {
            if raw.abs() <= b {
                (raw, 1.0)
            } else {
                (raw.clamp(-b, b), 0.0)
            }
        }
        None => (raw, 1.0),
    }
}

/// Loss and full parameter gradient of one example; the external entry point
/// used by finite-difference gradient verification.
pub fn loss_and_grad<N: Network>(
    net: &N,
    x: &[f64],
    target: f64,
    loss: LossKind,
    clip: Option<f64>,
) -> Result<(f64, Vec<f64>)> {
    let mut scratch = net.new_scratch();
    let mut grad = vec![0.0; net.n_params()];
    let raw = net.forward_cached(x, &mut scratch);
    let (pred, gate) = apply_clip(raw, clip);
    let value = loss_value(loss, pred, target)?;
    let upstream = loss_grad(loss, pred, target) * gate;
    if upstream != 0.0 {
        net.backward(x, &mut scratch, upstream, &mut grad);
    }
    Ok((value, grad))
}

/// Summary of one training run.
#[derive(Debug, Clone, Copy)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainStats {
    /// Mean training loss at initialization.
    pub initial_loss: f64,
    /// Mean training loss of the returned (best) parameters.
    pub final_loss: f64,
    /// Number of epochs actually run.
    pub epochs_run: usize,
}

pub(crate) struct TrainProblem<'a> {
    /// Scaled inputs, one row per observation.
    pub x: &'a Matrix,
    pub targets: &'a [f64],
    pub clip: Option<f64>,
}

/// Adam hyperparameters plus loop controls, already validated.
pub(crate) struct LoopConfig {
    pub loss: LossKind,
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub early_stop_tol: f64,
    pub patience: usize,
}

fn full_loss<N: Network>(
    net: &N,
    prob: &TrainProblem<'_>,
    scratch: &mut N::Scratch,
    loss: LossKind,
) -> f64 {
    let n = prob.x.rows();
    let mut acc = 0.0;
    for i in 0..n {
        let raw = net.forward_cached(prob.x.row(i), scratch);
        let (pred, _) = apply_clip(raw, prob.clip);
        // targets were validated up front; fall back to the raw residual
        // rather than panicking if a non-finite creeps in mid-training
        acc += match loss {
            LossKind::Squared => {
                let r = pred - prob.targets[i];
                r * r
            }
            LossKind::Logistic => softplus(pred) - prob.targets[i] * pred,
        };
    }
    acc / n as f64
}

/// Mini-batch Adam with best-parameter tracking. The returned parameters are
/// the epoch snapshot with the lowest full-sample training loss, so the final
/// loss never exceeds the loss at initialization.
pub(crate) fn train_loop<N: Network>(
    net: &mut N,
    prob: &TrainProblem<'_>,
    cfg: &LoopConfig,
    rng: &mut Rng,
) -> Result<TrainStats> {
    let n = prob.x.rows();
    debug_assert!(n > 0);
    let p = net.n_params();
    let mut scratch = net.new_scratch();
    let mut grad = vec![0.0; p];
    let mut m = vec![0.0; p];
    let mut v = vec![0.0; p];
    let mut step = 0usize;

    let initial_loss = full_loss(net, prob, &mut scratch, cfg.loss);
    if !initial_loss.is_finite() {
        return Err(Error::Divergence { epoch: 0 });
    }
    let mut best_loss = initial_loss;
    let mut best_params = net.params().to_vec();
    let mut stall = 0usize;
    let mut epochs_run = 0usize;

    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=cfg.epochs {
        epochs_run = epoch;
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            grad.fill(0.0);
            for &i in batch {
                let raw = net.forward_cached(prob.x.row(i), &mut scratch);
                let (pred, gate) = apply_clip(raw, prob.clip);
                let upstream = loss_grad(cfg.loss, pred, prob.targets[i]) * gate;
                if upstream != 0.0 {
                    net.backward(prob.x.row(i), &mut scratch, upstream, &mut grad);
                }
            }
            let inv = 1.0 / batch.len() as f64;
            step += 1;
            let b1t = 1.0 - cfg.beta1.powi(step as i32);
            let b2t = 1.0 - cfg.beta2.powi(step as i32);
            let params = net.params_mut();
            for k in 0..p {
                let g = grad[k] * inv;
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
                let mhat = m[k] / b1t;
                let vhat = v[k] / b2t;
                params[k] -= cfg.step_size * mhat / (vhat.sqrt() + cfg.adam_eps);
            }
        }
        let cur = full_loss(net, prob, &mut scratch, cfg.loss);
        if !cur.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        if cur < best_loss {
            if best_loss - cur < cfg.early_stop_tol {
                stall += 1;
            } else {
                stall = 0;
            }
            best_loss = cur;
            best_params.copy_from_slice(net.params());
        } else {
            stall += 1;
        }
        if stall >= cfg.patience {
            break;
        }
    }
    net.params_mut().copy_from_slice(&best_params);
    Ok(TrainStats { initial_loss, final_loss: best_loss, epochs_run })
}
