use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{GraphEdge, Keyframe};
use crate::geometry::Vec3;
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    /// Geometric noise variance σ_g², metres².
    pub sigma_g2: f64,
    pub q_min: f64,
    pub c_min: f64,
    /// Huber threshold on the unscaled residual norm, metres.
    pub huber_delta: f64,
    pub lm_lambda0: f64,
    pub lm_factor: f64,
    pub lm_lambda_max: f64,
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl SolverConfig {
    /// Defaults with the Huber threshold at three noise standard deviations.
    pub fn with_sigma(sigma_g2: f64) -> Self {
        Self {
            sigma_g2,
            q_min: 0.3,
            c_min: 0.05,
            huber_delta: 3.0 * sigma_g2.sqrt(),
            lm_lambda0: 1e-6,
            lm_factor: 10.0,
            lm_lambda_max: 1e12,
            max_iters: 50,
            rel_tol: 1e-12,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.sigma_g2, self.huber_delta, self.lm_lambda0, self.lm_factor, self.lm_lambda_max, self.rel_tol];
        if positive.iter().any(|v| !(*v > 0.0 && v.is_finite())) || self.max_iters == 0 {
            return Err(Error::InvalidInput("solver parameters must be positive"));
        }
        if !(0.0..=1.0).contains(&self.q_min) || !(0.0..=1.0).contains(&self.c_min) {
            return Err(Error::InvalidInput("q_min and c_min must lie in [0, 1]"));
        }
        Ok(())
    }
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self::with_sigma(1e-4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MatchWeight {
    Weight(f64),
    Dropped,
}

pub fn match_weight(q: f64, c: f64, cfg: &SolverConfig) -> MatchWeight {
    if q < cfg.q_min || c < cfg.c_min || q <= 0.0 {
        MatchWeight::Dropped
    } else {
        MatchWeight::Weight(cfg.sigma_g2 / q)
    }
}

/// `ρ(s) = s²` for `s ≤ δ`, `2δs − δ²` beyond.
pub fn huber(s: f64, delta: f64) -> f64 {
    if s <= delta {
        s * s
    } else {
        2.0 * delta * s - delta * delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeResidual {
    /// Position of the match within the edge.
    pub match_index: usize,
    /// `r / w`.
    pub scaled: Vec3,
    pub weight: f64,
    /// Iteratively reweighted factor: 1 inside the Huber threshold, `δ/‖r‖` outside.
    pub robust: f64,
    /// `huber(‖r‖) / w²`.
    pub cost: f64,
    /// Object-frame position of the `j` point, used for Jacobians.
    pub(crate) y: Vec3,
}

pub fn edge_residuals(ki: &Keyframe, kj: &Keyframe, edge: &GraphEdge, cfg: &SolverConfig) -> Vec<EdgeResidual> {
    let inv_i = ki.pose.inverse();
    let mut out = Vec::new();
    for (idx, m) in edge.matches.iter().enumerate() {
        let c = ki.confidence[m.i].min(kj.confidence[m.j]);
        let w = match match_weight(m.q, c, cfg) {
            MatchWeight::Weight(w) => w,
            MatchWeight::Dropped => continue,
        };
        let y = kj.pose.apply(&kj.pointmap[m.j]);
        let r = ki.pointmap[m.i] - inv_i.apply(&y);
        let norm = r.norm();
        let robust = if norm <= cfg.huber_delta { 1.0 } else { cfg.huber_delta / norm };
        out.push(EdgeResidual {
            match_index: idx,
            scaled: r / w,
            weight: w,
            robust,
            cost: huber(norm, cfg.huber_delta) / (w * w),
            y,
        });
    }
    out
}
