//! Ground-truth correspondence oracle standing in for a learned matcher.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{Camera, RigidTransform};
use crate::image::DepthMap;
use crate::posegraph::{Keyframe, Match, MatchResult, Matcher};
use crate::{Error, Result};

/// What the oracle knows about one view.
#[derive(Debug, Clone, PartialEq)]
pub struct GtView {
    pub camera: Camera,
    /// Camera to object frame.
    pub t_oc: RigidTransform,
    /// Noise-free depth; 0 where the object is absent.
    pub depth: DepthMap,
    pub object: u32,
    pub generated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatcherConfig {
    /// Inlier count for fully covisible views.
    pub max_matches: usize,
    pub outlier_fraction: f64,
    pub inlier_q: (f64, f64),
    pub outlier_q: (f64, f64),
    /// Multiplier on inlier count and confidence when a generated view is involved.
    pub generated_factor: f64,
    /// Depth agreement required for covisibility, metres.
    pub depth_tolerance: f64,
    pub seed: u64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            max_matches: 200,
            outlier_fraction: 0.1,
            inlier_q: (0.6, 1.0),
            outlier_q: (0.0, 0.4),
            generated_factor: 0.7,
            depth_tolerance: 0.004,
            seed: 0,
        }
    }
}

/// Pixel pairs `(a, b)` seeing the same surface point.
pub fn covisible_pixels(a: &GtView, b: &GtView, tolerance: f64) -> Vec<(usize, usize)> {
    if a.object != b.object {
        return Vec::new();
    }
    let to_b = b.t_oc.inverse().compose(&a.t_oc);
    let mut out = Vec::new();
    for k in 0..a.depth.len() {
        let z = a.depth[k];
        if z <= 0.0 {
            continue;
        }
        let (x, y) = a.depth.coords(k);
        let p = to_b.apply(&a.camera.unproject(x as f64, y as f64, z));
        let Ok((u, v, d)) = b.camera.project_camera(&p) else { continue };
        let Some((bx, by)) = b.camera.pixel_at(u, v) else { continue };
        let zb = *b.depth.get(bx, by);
        if zb > 0.0 && (zb - d).abs() < tolerance {
            out.push((k, b.depth.index(bx, by)));
        }
    }
    out
}

/// Matches between two views: `inlier_count` covisible pairs with high
/// confidence plus uniformly drawn outliers with low confidence.
pub fn synth_matcher(a: &GtView, b: &GtView, inlier_count: usize, outlier_fraction: f64, seed: u64) -> Result<MatchResult> {
    synth_matcher_with(a, b, inlier_count, outlier_fraction, seed, &MatcherConfig::default())
}

fn synth_matcher_with(a: &GtView, b: &GtView, inlier_count: usize, outlier_fraction: f64, seed: u64, cfg: &MatcherConfig) -> Result<MatchResult> {
    let mut cov = covisible_pixels(a, b, cfg.depth_tolerance);
    if cov.is_empty() {
        return Err(Error::NoCovisibility);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cov.shuffle(&mut rng);
    cov.truncate(inlier_count);
    let q_scale = if a.generated || b.generated { cfg.generated_factor } else { 1.0 };
    let mut matches: Vec<Match> = cov
        .iter()
        .map(|&(i, j)| Match { i, j, q: (rng.random_range(cfg.inlier_q.0..=cfg.inlier_q.1) * q_scale).min(1.0) })
        .collect();
    let inliers = matches.len();
    let f = outlier_fraction.clamp(0.0, 0.95);
    let outliers = (inliers as f64 * f / (1.0 - f)).round() as usize;
    if outliers > 0 {
        let va: Vec<usize> = (0..a.depth.len()).filter(|&k| a.depth[k] > 0.0).collect();
        let vb: Vec<usize> = (0..b.depth.len()).filter(|&k| b.depth[k] > 0.0).collect();
        for _ in 0..outliers {
            let i = va[rng.random_range(0..va.len())];
            let j = vb[rng.random_range(0..vb.len())];
            matches.push(Match { i, j, q: rng.random_range(cfg.outlier_q.0..=cfg.outlier_q.1) });
        }
        matches.shuffle(&mut rng);
    }
    Ok(MatchResult { matches, inliers })
}

/// [`Matcher`] over keyframes whose `tag` indexes `views`. The inlier count
/// scales with the covisible fraction of the first view.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SyntheticMatcher {
    pub views: Vec<GtView>,
    pub config: MatcherConfig,
}

impl SyntheticMatcher {
    pub fn new(config: MatcherConfig) -> Self {
        Self { views: Vec::new(), config }
    }

    /// Registers a view and returns its tag.
    pub fn register(&mut self, view: GtView) -> usize {
        self.views.push(view);
        self.views.len() - 1
    }

    pub fn match_views(&self, a: usize, b: usize) -> Result<MatchResult> {
        let (va, vb) = (&self.views[a], &self.views[b]);
        let cov = covisible_pixels(va, vb, self.config.depth_tolerance).len();
        if cov == 0 {
            return Err(Error::NoCovisibility);
        }
        let valid = va.depth.as_slice().iter().filter(|d| **d > 0.0).count().max(1);
        let factor = if va.generated || vb.generated { self.config.generated_factor } else { 1.0 };
        let count = ((self.config.max_matches as f64) * (cov as f64 / valid as f64) * factor).round() as usize;
        let seed = self.config.seed ^ ((a as u64) << 32 | b as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        synth_matcher_with(va, vb, count.max(1), self.config.outlier_fraction, seed, &self.config)
    }
}

impl Matcher for SyntheticMatcher {
    fn match_keyframes(&self, a: &Keyframe, b: &Keyframe) -> Result<MatchResult> {
        if a.tag >= self.views.len() || b.tag >= self.views.len() {
            return Err(Error::InvalidInput("keyframe tag is not a registered view"));
        }
        self.match_views(a.tag, b.tag)
    }
}
