//! Pose and reconstruction accuracy metrics.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use super::shapes::SyntheticObject;
use crate::geometry::{NearestIndex, PointCloud, RigidTransform, Vec3};
use crate::image::{check_shape, ColorImage};
use crate::{Error, Result};

pub const ADD_POINTS: usize = 2048;
pub const AUC_BINS: usize = 100;
pub const AUC_THRESHOLD: f64 = 0.1;
pub const BRUTE_FORCE_LIMIT: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub add_auc: f64,
    pub adds_auc: f64,
    /// Metres.
    pub chamfer: f64,
    /// Decibels; infinite for identical images.
    pub psnr: f64,
}

/// Fixed strided subsample of the model used for ADD. Symmetric objects
/// keep their half-turn pairs together.
pub fn model_points(object: &SyntheticObject) -> Vec<Vec3> {
    let pts = object.points();
    let block = if object.symmetric() { 2 } else { 1 };
    let stride = pts.len().div_ceil(ADD_POINTS).max(1);
    pts.chunks(block).step_by(stride).flatten().copied().collect()
}

/// Mean distance between corresponding transformed model points.
pub fn add(est: &RigidTransform, gt: &RigidTransform, model: &[Vec3]) -> f64 {
    if model.is_empty() {
        return 0.0;
    }
    model.iter().map(|x| (est.apply(x) - gt.apply(x)).norm()).sum::<f64>() / model.len() as f64
}

/// Mean distance from each estimated model point to the closest ground-truth model point.
pub fn add_s(est: &RigidTransform, gt: &RigidTransform, model: &[Vec3]) -> f64 {
    if model.is_empty() {
        return 0.0;
    }
    let target: Vec<Vec3> = model.iter().map(|x| gt.apply(x)).collect();
    let index = NearestIndex::new(&target);
    model
        .iter()
        .map(|x| index.nearest(&est.apply(x)).map(|(_, d2)| d2.sqrt()).unwrap_or(0.0))
        .sum::<f64>()
        / model.len() as f64
}

/// Area under the accuracy-vs-threshold curve, thresholds `i·max/bins` for `i = 1..=bins`.
pub fn auc(errors: &[f64], threshold_max: f64) -> f64 {
    if errors.is_empty() {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 1..=AUC_BINS {
        let tau = threshold_max * i as f64 / AUC_BINS as f64;
        sum += errors.iter().filter(|e| **e <= tau).count() as f64 / errors.len() as f64;
    }
    sum / AUC_BINS as f64
}

/// ADD and ADD-S AUC over aligned pose lists.
pub fn add_auc(est: &[RigidTransform], gt: &[RigidTransform], object: &SyntheticObject, threshold_max: f64) -> Result<(f64, f64)> {
    if est.len() != gt.len() {
        return Err(Error::DimensionMismatch { expected: gt.len(), actual: est.len() });
    }
    let model = model_points(object);
    let adds: Vec<f64> = est.iter().zip(gt).map(|(e, g)| add(e, g, &model)).collect();
    let addss: Vec<f64> = est.iter().zip(gt).map(|(e, g)| add_s(e, g, &model)).collect();
    Ok((auc(&adds, threshold_max), auc(&addss, threshold_max)))
}

fn mean_nearest_brute(a: &[Vec3], b: &[Vec3]) -> f64 {
    a.iter()
        .map(|p| b.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min).sqrt())
        .sum::<f64>()
        / a.len() as f64
}

fn mean_nearest_grid(a: &[Vec3], b: &[Vec3]) -> f64 {
    let index = NearestIndex::new(b);
    a.iter().map(|p| index.nearest(p).map(|(_, d2)| d2.sqrt()).unwrap_or(0.0)).sum::<f64>() / a.len() as f64
}

pub fn chamfer_brute_force(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(0.5 * (mean_nearest_brute(a.points(), b.points()) + mean_nearest_brute(b.points(), a.points())))
}

pub fn chamfer_accelerated(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCloud);
    }
    Ok(0.5 * (mean_nearest_grid(a.points(), b.points()) + mean_nearest_grid(b.points(), a.points())))
}

/// Symmetric mean nearest-neighbour distance (unsquared).
pub fn chamfer(a: &PointCloud, b: &PointCloud) -> Result<f64> {
    if a.len().max(b.len()) <= BRUTE_FORCE_LIMIT {
        chamfer_brute_force(a, b)
    } else {
        chamfer_accelerated(a, b)
    }
}

/// `10·log10(1 / MSE)` over all channels; `f64::INFINITY` for identical images.
pub fn psnr(a: &ColorImage, b: &ColorImage) -> Result<f64> {
    check_shape(a, b)?;
    if a.is_empty() {
        return Err(Error::InvalidInput("empty image"));
    }
    let mut se = 0.0;
    for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
        for c in 0..3 {
            se += (x[c] - y[c]) * (x[c] - y[c]);
        }
    }
    let mse = se / (3 * a.len()) as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (1.0 / mse).log10())
}
