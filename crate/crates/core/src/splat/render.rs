//! Front-to-back alpha compositing of projected isotropic Gaussians.
//!
//! Gaussians are sorted once by camera-frame centre depth (ties by index)
//! and splatted in that order, so every pixel composites its contributors
//! front to back. A Gaussian with camera-frame centre `(X, Y, Z)` and radius
//! `r` covers pixel `p` with weight `exp(-½ [(p_x-u)²/s_x² + (p_y-v)²/s_y²])`,
//! `s_x = f_x r / Z`, `s_y = f_y r / Z`.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::GaussianField;
use crate::geometry::{Camera, RigidTransform, Vec3};
use crate::image::{ColorImage, DepthMap, Grid, ScalarMap};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderSettings {
    pub background: [f64; 3],
    /// Upper clamp on per-pixel alpha.
    pub alpha_max: f64,
    /// Footprint half-width in projected standard deviations.
    pub cutoff_sigma: f64,
    /// Gaussians with centre depth below this are skipped.
    pub near: f64,
}

impl Default for RenderSettings {
    fn default() -> Self {
        Self { background: [0.0; 3], alpha_max: 0.9999, cutoff_sigma: 4.0, near: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: ColorImage,
    /// Alpha-weighted mean centre depth; 0 where nothing was splatted.
    pub depth: DepthMap,
    /// Accumulated opacity.
    pub silhouette: ScalarMap,
}

/// Camera-frame projection of one Gaussian.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Projected {
    pub index: usize,
    pub cam: Vec3,
    pub u: f64,
    pub v: f64,
    pub sx: f64,
    pub sy: f64,
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl Projected {
    #[inline]
    pub fn q(&self, px: usize, py: usize) -> f64 {
        let du = (px as f64 - self.u) / self.sx;
        let dv = (py as f64 - self.v) / self.sy;
        du * du + dv * dv
    }
}

/// Projects and depth-sorts the field; Gaussians outside the image or
/// behind the near plane are dropped.
pub(crate) fn project_sorted(
    field: &GaussianField,
    cam: &Camera,
    t_co: &RigidTransform,
    settings: &RenderSettings,
) -> Vec<Projected> {
    let mut out = Vec::with_capacity(field.len());
    let (w, h) = (cam.width as f64, cam.height as f64);
    for (index, g) in field.gaussians.iter().enumerate() {
        let p = t_co.apply(&g.position);
        if !(p.z > settings.near) {
            continue;
        }
        let u = cam.fx * p.x / p.z + cam.cx;
        let v = cam.fy * p.y / p.z + cam.cy;
        let sx = cam.fx * g.radius / p.z;
        let sy = cam.fy * g.radius / p.z;
        let (ex, ey) = (settings.cutoff_sigma * sx, settings.cutoff_sigma * sy);
        let (fx0, fx1) = ((u - ex).ceil().max(0.0), (u + ex).floor().min(w - 1.0));
        let (fy0, fy1) = ((v - ey).ceil().max(0.0), (v + ey).floor().min(h - 1.0));
        if !(fx0 <= fx1 && fy0 <= fy1) {
            continue;
        }
        out.push(Projected {
            index,
            cam: p,
            u,
            v,
            sx,
            sy,
            x0: fx0 as usize,
            x1: fx1 as usize,
            y0: fy0 as usize,
            y1: fy1 as usize,
        });
    }
    out.sort_by(|a, b| a.cam.z.total_cmp(&b.cam.z).then(a.index.cmp(&b.index)));
    out
}

/// Per-pixel compositing accumulators.
pub(crate) struct Accum {
    pub transmittance: Vec<f64>,
    pub color: Vec<[f64; 3]>,
    pub depth_num: Vec<f64>,
}

pub(crate) fn composite(field: &GaussianField, cam: &Camera, list: &[Projected], settings: &RenderSettings) -> Accum {
    let n = cam.width * cam.height;
    let mut acc = Accum {
        transmittance: alloc::vec![1.0; n],
        color: alloc::vec![[0.0; 3]; n],
        depth_num: alloc::vec![0.0; n],
    };
    for p in list {
        let g = &field.gaussians[p.index];
        for py in p.y0..=p.y1 {
            for px in p.x0..=p.x1 {
                let alpha = (g.opacity * (-0.5 * p.q(px, py)).exp()).min(settings.alpha_max);
                let k = py * cam.width + px;
                let w = alpha * acc.transmittance[k];
                for c in 0..3 {
                    acc.color[k][c] += g.color[c] * w;
                }
                acc.depth_num[k] += p.cam.z * w;
                acc.transmittance[k] *= 1.0 - alpha;
            }
        }
    }
    acc
}

pub fn render(field: &GaussianField, cam: &Camera, t_co: &RigidTransform) -> RenderOutput {
    render_with(field, cam, t_co, &RenderSettings::default())
}

pub fn render_with(field: &GaussianField, cam: &Camera, t_co: &RigidTransform, settings: &RenderSettings) -> RenderOutput {
    let list = project_sorted(field, cam, t_co, settings);
    let acc = composite(field, cam, &list, settings);
    finish(cam, &acc, settings)
}

pub(crate) fn finish(cam: &Camera, acc: &Accum, settings: &RenderSettings) -> RenderOutput {
    let (w, h) = (cam.width, cam.height);
    let color = Grid::from_fn(w, h, |x, y| {
        let k = y * w + x;
        let t = acc.transmittance[k];
        let c = acc.color[k];
        [
            c[0] + t * settings.background[0],
            c[1] + t * settings.background[1],
            c[2] + t * settings.background[2],
        ]
    });
    let silhouette = Grid::from_fn(w, h, |x, y| (1.0 - acc.transmittance[y * w + x]).clamp(0.0, 1.0));
    let depth = Grid::from_fn(w, h, |x, y| {
        let k = y * w + x;
        let s = 1.0 - acc.transmittance[k];
        if s > 0.0 {
            acc.depth_num[k] / s
        } else {
            0.0
        }
    });
    RenderOutput { color, depth, silhouette }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splat::IsotropicGaussian;
    use alloc::vec;
    use proptest::prelude::*;

    fn cam() -> Camera {
        Camera::new(100.0, 100.0, 32.0, 24.0, 64, 48).unwrap()
    }

    #[test]
    fn empty_field_renders_background() {
        let s = RenderSettings { background: [0.2, 0.3, 0.4], ..Default::default() };
        let out = render_with(&GaussianField::default(), &cam(), &RigidTransform::identity(), &s);
        assert!(out.silhouette.as_slice().iter().all(|&v| v == 0.0));
        assert!(out.color.as_slice().iter().all(|c| *c == [0.2, 0.3, 0.4]));
    }

    #[test]
    fn single_gaussian_on_axis() {
        let g = IsotropicGaussian::new(Vec3::new(0.0, 0.0, 1.0), 0.01, [1.0, 1.0, 1.0], 1.0).unwrap();
        let f = GaussianField::new(vec![g], 0).unwrap();
        let out = render(&f, &cam(), &RigidTransform::identity());
        assert!((out.depth.get(32, 24) - 1.0).abs() < 1e-6);
        assert!(*out.silhouette.get(32, 24) >= 0.99);
        assert_eq!(*out.silhouette.get(0, 0), 0.0);
    }

    #[test]
    fn front_gaussian_occludes() {
        let red = IsotropicGaussian::new(Vec3::new(0.0, 0.0, 1.0), 0.05, [1.0, 0.0, 0.0], 1.0).unwrap();
        let blue = IsotropicGaussian::new(Vec3::new(0.0, 0.0, 2.0), 0.1, [0.0, 0.0, 1.0], 1.0).unwrap();
        // listing order must not matter
        let f = GaussianField::new(vec![blue, red], 0).unwrap();
        let c = *render(&f, &cam(), &RigidTransform::identity()).color.get(32, 24);
        assert!(c[0] > 0.99 && c[2] < 0.01, "{c:?}");
    }

    #[test]
    fn behind_camera_is_skipped() {
        let g = IsotropicGaussian::new(Vec3::new(0.0, 0.0, -1.0), 0.5, [1.0; 3], 1.0).unwrap();
        let f = GaussianField::new(vec![g], 0).unwrap();
        let out = render(&f, &cam(), &RigidTransform::identity());
        assert!(out.silhouette.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rendering_is_deterministic() {
        let gs: Vec<_> = (0..30)
            .map(|i| {
                let a = i as f64 * 0.37;
                IsotropicGaussian::new(Vec3::new(0.05 * a.sin(), 0.04 * a.cos(), 0.8 + 0.01 * (i % 3) as f64), 0.02, [0.5, 0.2, 0.9], 0.7)
                    .unwrap()
            })
            .collect();
        let f = GaussianField::new(gs, 0).unwrap();
        let a = render(&f, &cam(), &RigidTransform::identity());
        let b = render(&f, &cam(), &RigidTransform::identity());
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn silhouette_stays_in_unit_interval(
            gs in prop::collection::vec(
                (prop::array::uniform3(-0.3f64..0.3), 0.3f64..1.5, 0.001f64..0.2, 0.01f64..=1.0), 0..12)
        ) {
            let field = GaussianField::new(
                gs.iter().map(|(p, z, r, o)| IsotropicGaussian::new(Vec3::new(p[0], p[1], *z + p[2]), *r, [0.5; 3], *o).unwrap()).collect(),
                0,
            ).unwrap();
            let c = Camera::new(40.0, 40.0, 8.0, 8.0, 16, 16).unwrap();
            let out = render(&field, &c, &RigidTransform::identity());
            for (s, d) in out.silhouette.as_slice().iter().zip(out.depth.as_slice()) {
                prop_assert!((0.0..=1.0).contains(s));
                if *s > 0.0 { prop_assert!(d.is_finite()); }
            }
        }
    }
}
