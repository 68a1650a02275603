use alloc::vec::Vec;

use crate::geometry::Vec3;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicGaussian {
    /// Centre in the object frame, metres.
    pub position: Vec3,
    /// Standard deviation, metres.
    pub radius: f64,
    pub color: [f64; 3],
    pub opacity: f64,
}

impl IsotropicGaussian {
    pub fn new(position: Vec3, radius: f64, color: [f64; 3], opacity: f64) -> Result<Self> {
        let g = Self { position, radius, color, opacity };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.position.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("gaussian position must be finite"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::InvalidInput("gaussian radius must be positive"));
        }
        if !(self.opacity > 0.0 && self.opacity <= 1.0) {
            return Err(Error::InvalidInput("gaussian opacity must lie in (0, 1]"));
        }
        if self.color.iter().any(|c| !(0.0..=1.0).contains(c)) {
            return Err(Error::InvalidInput("gaussian color must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Gaussians of one object, expressed in its canonical frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianField {
    pub gaussians: Vec<IsotropicGaussian>,
    pub frame: u32,
}

impl GaussianField {
    pub fn new(gaussians: Vec<IsotropicGaussian>, frame: u32) -> Result<Self> {
        for g in &gaussians {
            g.validate()?;
        }
        Ok(Self { gaussians, frame })
    }

    pub fn len(&self) -> usize {
        self.gaussians.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaussians.is_empty()
    }

    pub fn centers(&self) -> Vec<Vec3> {
        self.gaussians.iter().map(|g| g.position).collect()
    }
}
