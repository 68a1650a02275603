//! Adam descent on the summed mapping loss.
//!
//! Positions are updated directly, radii in log space, opacities in logit
//! space, colours directly with clamping to `[0, 1]`.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::loss::{evaluate, LossSettings, MapFrame};
use super::GaussianField;
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MapOptimizerConfig {
    pub iters: usize,
    pub lr_position: f64,
    pub lr_log_radius: f64,
    pub lr_color: f64,
    pub lr_logit_opacity: f64,
    /// Learning rates decay geometrically to this fraction at the last iteration.
    pub lr_final_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    /// Gaussians below this opacity are removed after optimization.
    pub prune_opacity: f64,
    pub loss: LossSettings,
}

impl Default for MapOptimizerConfig {
    fn default() -> Self {
        Self {
            iters: 200,
            lr_position: 1e-3,
            lr_log_radius: 1e-2,
            lr_color: 1e-2,
            lr_logit_opacity: 2e-2,
            lr_final_fraction: 0.02,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-12,
            min_radius: 1e-4,
            max_radius: 1.0,
            prune_opacity: 0.01,
            loss: LossSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub iterations: usize,
    pub pruned: usize,
}

/// Summed loss over frames and the accumulated gradient, packed as
/// `[x, y, z, log r, r, g, b, logit o]` per Gaussian.
fn loss_and_packed_grad(field: &GaussianField, frames: &[MapFrame], settings: &LossSettings) -> (f64, Vec<f64>) {
    let mut total = 0.0;
    let mut packed = vec![0.0; 8 * field.len()];
    for frame in frames {
        let (l, grads) = evaluate(field, frame, settings, true);
        total += l;
        for (i, (g, gauss)) in grads.iter().zip(&field.gaussians).enumerate() {
            let o = gauss.opacity.min(1.0 - 1e-9);
            let dst = &mut packed[8 * i..8 * i + 8];
            dst[0] += g.position.x;
            dst[1] += g.position.y;
            dst[2] += g.position.z;
            dst[3] += g.radius * gauss.radius;
            dst[4] += g.color[0];
            dst[5] += g.color[1];
            dst[6] += g.color[2];
            dst[7] += g.opacity * o * (1.0 - o);
        }
    }
    (total, packed)
}

pub(crate) fn total_loss(field: &GaussianField, frames: &[MapFrame], settings: &LossSettings) -> f64 {
    frames.iter().map(|f| evaluate(field, f, settings, false).0).sum()
}

fn logit(o: f64) -> f64 {
    let o = o.clamp(1e-12, 1.0 - 1e-9);
    (o / (1.0 - o)).ln()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Optimizes a private copy of `field` against `frames`. The returned
/// field never has a higher total loss than the input.
pub fn optimize_map(field: &GaussianField, frames: &[MapFrame], cfg: &MapOptimizerConfig) -> Result<(GaussianField, MapReport)> {
    if frames.is_empty() {
        return Err(Error::InvalidInput("optimize_map needs at least one frame"));
    }
    for f in frames {
        // surfaces shape errors before any work
        super::loss::mapping_loss_and_grad(&GaussianField::default(), f, &cfg.loss)?;
    }
    let initial_loss = total_loss(field, frames, &cfg.loss);
    let mut current = field.clone();
    let mut best = (initial_loss, field.clone());
    let n = 8 * field.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let lrs = [
        cfg.lr_position,
        cfg.lr_position,
        cfg.lr_position,
        cfg.lr_log_radius,
        cfg.lr_color,
        cfg.lr_color,
        cfg.lr_color,
        cfg.lr_logit_opacity,
    ];
    let decay = if cfg.iters > 1 { cfg.lr_final_fraction.powf(1.0 / (cfg.iters - 1) as f64) } else { 1.0 };
    let mut iterations = 0;
    let mut last_loss = initial_loss;
    for it in 0..cfg.iters {
        let (loss, grad) = loss_and_packed_grad(&current, frames, &cfg.loss);
        last_loss = loss;
        if loss < best.0 {
            best = (loss, current.clone());
        }
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        iterations = it + 1;
        let scale = decay.powi(it as i32);
        let bc1 = 1.0 - cfg.beta1.powi(it as i32 + 1);
        let bc2 = 1.0 - cfg.beta2.powi(it as i32 + 1);
        for (i, g) in current.gaussians.iter_mut().enumerate() {
            let mut step = [0.0; 8];
            for j in 0..8 {
                let k = 8 * i + j;
                m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * grad[k];
                v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * grad[k] * grad[k];
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                step[j] = lrs[j] * scale * mh / (vh.sqrt() + cfg.epsilon);
            }
            g.position.x -= step[0];
            g.position.y -= step[1];
            g.position.z -= step[2];
            if step[3] != 0.0 {
                g.radius = (g.radius * (-step[3]).exp()).clamp(cfg.min_radius, cfg.max_radius);
            }
            for c in 0..3 {
                g.color[c] = (g.color[c] - step[4 + c]).clamp(0.0, 1.0);
            }
            if step[7] != 0.0 {
                g.opacity = sigmoid(logit(g.opacity) - step[7]).clamp(1e-12, 1.0);
            }
        }
        last_loss = f64::NAN;
    }
    if last_loss.is_nan() {
        last_loss = total_loss(&current, frames, &cfg.loss);
    }
    let (mut final_loss, mut result) = if last_loss <= initial_loss { (last_loss, current) } else { best };

    let mut pruned = 0;
    if result.gaussians.iter().any(|g| g.opacity < cfg.prune_opacity) {
        let mut kept = result.clone();
        kept.gaussians.retain(|g| g.opacity >= cfg.prune_opacity);
        let l = total_loss(&kept, frames, &cfg.loss);
        if l <= initial_loss {
            pruned = result.len() - kept.len();
            result = kept;
            final_loss = l;
        }
    }
    Ok((result, MapReport { initial_loss, final_loss, iterations, pruned }))
}
