use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{GaussianField, IsotropicGaussian};
use crate::geometry::{NearestIndex, PointCloud, Vec3};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedParams {
    /// Radius = `radius_scale` × mean distance to the `neighbors` nearest points.
    pub radius_scale: f64,
    pub neighbors: usize,
    /// Radius used when a point has no neighbours.
    pub fallback_radius: f64,
    pub min_radius: f64,
    pub max_radius: f64,
    pub opacity: f64,
    /// Strided subsampling down to this many points; 0 keeps all.
    pub max_gaussians: usize,
}

impl Default for SeedParams {
    fn default() -> Self {
        Self {
            radius_scale: 0.75,
            neighbors: 3,
            fallback_radius: 0.005,
            min_radius: 1e-4,
            max_radius: 0.05,
            opacity: 0.9,
            max_gaussians: 0,
        }
    }
}

pub fn seed_from_pointcloud(cloud: &PointCloud, colors: &[[f64; 3]], params: &SeedParams) -> Result<GaussianField> {
    if cloud.is_empty() {
        return Err(Error::EmptyCloud);
    }
    if colors.len() != cloud.len() {
        return Err(Error::DimensionMismatch { expected: cloud.len(), actual: colors.len() });
    }
    let stride = if params.max_gaussians > 0 && cloud.len() > params.max_gaussians {
        cloud.len().div_ceil(params.max_gaussians)
    } else {
        1
    };
    let points: Vec<Vec3> = cloud.points().iter().step_by(stride).copied().collect();
    let colors: Vec<[f64; 3]> = colors.iter().step_by(stride).copied().collect();
    let index = NearestIndex::new(&points);
    let mut gaussians = Vec::with_capacity(points.len());
    for (p, c) in points.iter().zip(&colors) {
        let nn = index.k_nearest(p, params.neighbors + 1);
        let dists: Vec<f64> = nn.iter().map(|(_, d2)| d2.sqrt()).filter(|d| *d > 0.0).take(params.neighbors).collect();
        let radius = if dists.is_empty() {
            params.fallback_radius
        } else {
            params.radius_scale * dists.iter().sum::<f64>() / dists.len() as f64
        };
        let color = [c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0), c[2].clamp(0.0, 1.0)];
        gaussians.push(IsotropicGaussian::new(
            *p,
            radius.clamp(params.min_radius, params.max_radius),
            color,
            params.opacity,
        )?);
    }
    GaussianField::new(gaussians, 0)
}

/// Weighted voxel average of coloured points.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedCloud {
    pub points: Vec<Vec3>,
    pub colors: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
}

impl FusedCloud {
    pub fn cloud(&self) -> Result<PointCloud> {
        PointCloud::with_confidence(self.points.clone(), Some(self.weights.clone()))
    }
}

/// Merges points falling in the same voxel into their weight-averaged
/// position and colour. Output order follows voxel key order.
pub fn voxel_fuse(points: &[Vec3], colors: &[[f64; 3]], weights: &[f64], voxel: f64) -> Result<FusedCloud> {
    if colors.len() != points.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), actual: colors.len() });
    }
    if weights.len() != points.len() {
        return Err(Error::DimensionMismatch { expected: points.len(), actual: weights.len() });
    }
    if !(voxel > 0.0) {
        return Err(Error::InvalidInput("voxel size must be positive"));
    }
    let mut cells: BTreeMap<(i64, i64, i64), (Vec3, [f64; 3], f64)> = BTreeMap::new();
    for ((p, c), w) in points.iter().zip(colors).zip(weights) {
        if !(*w > 0.0) || !p.iter().all(|v| v.is_finite()) {
            continue;
        }
        let key = ((p.x / voxel).floor() as i64, (p.y / voxel).floor() as i64, (p.z / voxel).floor() as i64);
        let e = cells.entry(key).or_insert((Vec3::zeros(), [0.0; 3], 0.0));
        e.0 += p * *w;
        for k in 0..3 {
            e.1[k] += c[k] * w;
        }
        e.2 += w;
    }
    let mut out = FusedCloud { points: Vec::new(), colors: Vec::new(), weights: Vec::new() };
    for (_, (p, c, w)) in cells {
        out.points.push(p / w);
        out.colors.push([c[0] / w, c[1] / w, c[2] / w]);
        out.weights.push(w);
    }
    Ok(out)
}
