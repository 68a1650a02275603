use serde::{Deserialize, Serialize};

use super::{RigidTransform, Vec3};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Pinhole intrinsics. Pixel `(x, y)` has its centre at `u = x`, `v = y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Result<Self> {
        let cam = Self { fx, fy, cx, cy, width, height };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(Error::InvalidInput("focal lengths must be positive"));
        }
        if !(self.cx >= 0.0 && self.cx < self.width as f64 && self.cy >= 0.0 && self.cy < self.height as f64) {
            return Err(Error::InvalidInput("principal point must lie inside the image"));
        }
        Ok(())
    }

    /// Projects a camera-frame point.
    #[inline]
    pub fn project_camera(&self, p: &Vec3) -> Result<(f64, f64, f64)> {
        if !(p.z > 0.0) {
            return Err(Error::NonPositiveDepth(p.z));
        }
        Ok((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy, p.z))
    }

    /// Projects `p` after mapping it into the camera frame with `t_co`.
    pub fn project(&self, t_co: &RigidTransform, p: &Vec3) -> Result<(f64, f64, f64)> {
        self.project_camera(&t_co.apply(p))
    }

    /// Camera-frame point at pixel coordinates `(u, v)` and depth `z`.
    #[inline]
    pub fn unproject(&self, u: f64, v: f64, z: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx * z, (v - self.cy) / self.fy * z, z)
    }

    /// Nearest pixel index for continuous coordinates, if inside the image.
    #[inline]
    pub fn pixel_at(&self, u: f64, v: f64) -> Option<(usize, usize)> {
        let x = libm_round(u);
        let y = libm_round(v);
        if x < 0.0 || y < 0.0 || x >= self.width as f64 || y >= self.height as f64 {
            None
        } else {
            Some((x as usize, y as usize))
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }
}

#[inline]
fn libm_round(v: f64) -> f64 {
    (v + 0.5).floor()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cam() -> Camera {
        Camera::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap()
    }

    #[test]
    fn optical_axis_projects_to_principal_point() {
        let (u, v, d) = cam().project(&RigidTransform::identity(), &Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!((u, v, d), (50.0, 50.0, 2.0));
    }

    #[test]
    fn off_axis_point() {
        let (u, _, _) = cam().project(&RigidTransform::identity(), &Vec3::new(0.5, 0.0, 1.0)).unwrap();
        assert_eq!(u, 100.0);
    }

    #[test]
    fn behind_camera_is_rejected() {
        let err = cam().project(&RigidTransform::identity(), &Vec3::new(0.0, 0.0, -1.0)).unwrap_err();
        assert_eq!(err, Error::NonPositiveDepth(-1.0));
    }

    #[test]
    fn invalid_intrinsics() {
        assert!(Camera::new(0.0, 1.0, 1.0, 1.0, 4, 4).is_err());
        assert!(Camera::new(1.0, 1.0, 4.0, 1.0, 4, 4).is_err());
    }

    proptest! {
        #[test]
        fn project_unproject_roundtrip(u in 0.0f64..100.0, v in 0.0f64..100.0, z in 0.01f64..50.0) {
            let c = cam();
            let p = c.unproject(u, v, z);
            let (u2, v2, z2) = c.project_camera(&p).unwrap();
            prop_assert!((u2 - u).abs() < 1e-9 && (v2 - v).abs() < 1e-9 && (z2 - z).abs() < 1e-9);
        }
    }
}
