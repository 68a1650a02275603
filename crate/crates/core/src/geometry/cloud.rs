use alloc::vec::Vec;

use super::{Mat3, Vec3};
use crate::{Error, Result};

/// Points in metres with optional strictly positive per-point confidence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Vec3>,
    confidence: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        Self::with_confidence(points, None)
    }

    pub fn with_confidence(points: Vec<Vec3>, confidence: Option<Vec<f64>>) -> Result<Self> {
        if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidInput("point cloud contains non-finite coordinates"));
        }
        if let Some(c) = &confidence {
            if c.len() != points.len() {
                return Err(Error::DimensionMismatch { expected: points.len(), actual: c.len() });
            }
            if c.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidInput("confidence must be strictly positive and finite"));
            }
        }
        Ok(Self { points, confidence })
    }

    #[inline]
    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    #[inline]
    pub fn confidence(&self) -> Option<&[f64]> {
        self.confidence.as_deref()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn into_parts(self) -> (Vec<Vec3>, Option<Vec<f64>>) {
        (self.points, self.confidence)
    }

    pub fn map_points(&self, f: impl Fn(&Vec3) -> Vec3) -> Self {
        Self { points: self.points.iter().map(f).collect(), confidence: self.confidence.clone() }
    }

    pub fn centroid(&self) -> Option<Vec3> {
        centroid(&self.points)
    }

    /// Population covariance of the points about their centroid.
    pub fn covariance(&self) -> Option<Mat3> {
        covariance(&self.points)
    }

    /// Every `stride`-th point starting from the first, keeping confidence.
    pub fn subsample(&self, max_points: usize) -> Self {
        if max_points == 0 || self.points.len() <= max_points {
            return self.clone();
        }
        let stride = self.points.len().div_ceil(max_points);
        let points = self.points.iter().step_by(stride).copied().collect();
        let confidence = self.confidence.as_ref().map(|c| c.iter().step_by(stride).copied().collect());
        Self { points, confidence }
    }
}

pub(crate) fn centroid(points: &[Vec3]) -> Option<Vec3> {
    if points.is_empty() {
        return None;
    }
    let sum = points.iter().fold(Vec3::zeros(), |acc, p| acc + p);
    Some(sum / points.len() as f64)
}

pub(crate) fn covariance(points: &[Vec3]) -> Option<Mat3> {
    let c = centroid(points)?;
    let mut cov = Mat3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    Some(cov / points.len() as f64)
}
