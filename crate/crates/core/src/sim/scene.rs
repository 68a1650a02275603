//! Synthetic RGB-D captures of an analytic object along a camera ring.

use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::shapes::{albedo, ShapeKind, SyntheticObject};
use crate::geometry::{Camera, Mat3, RigidTransform, Vec3};
use crate::image::{ColorImage, DepthMap, Grid, Mask, ScalarMap};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Trajectory {
    pub frames: usize,
    /// Camera distance to the object centre, metres.
    pub distance: f64,
    pub elevation_deg: f64,
    /// Azimuth swept from the first to the last frame.
    pub arc_deg: f64,
    pub start_azimuth_deg: f64,
}

impl Default for Trajectory {
    fn default() -> Self {
        Self { frames: 16, distance: 0.45, elevation_deg: 30.0, arc_deg: 360.0, start_azimuth_deg: 0.0 }
    }
}

impl Trajectory {
    pub fn azimuths_deg(&self) -> Vec<f64> {
        let n = self.frames;
        (0..n)
            .map(|k| {
                let f = if n > 1 { k as f64 / (n - 1) as f64 } else { 0.0 };
                self.start_azimuth_deg + f * self.arc_deg
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub depth_sigma: f64,
    pub color_sigma: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self { depth_sigma: 0.001, color_sigma: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TestViews {
    pub count: usize,
    pub elevation_deg: f64,
    pub azimuth_offset_deg: f64,
}

impl Default for TestViews {
    fn default() -> Self {
        Self { count: 8, elevation_deg: 15.0, azimuth_offset_deg: 11.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub shape: ShapeKind,
    pub camera: Camera,
    pub trajectory: Trajectory,
    pub test_views: TestViews,
    pub noise: NoiseSpec,
    pub object_points: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            shape: ShapeKind::Mug,
            camera: Camera { fx: 100.0, fy: 100.0, cx: 40.0, cy: 30.0, width: 80, height: 60 },
            trajectory: Trajectory::default(),
            test_views: TestViews::default(),
            noise: NoiseSpec::default(),
            object_points: 12_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub camera: Camera,
    /// Camera to object frame, ground truth.
    pub t_oc: RigidTransform,
    pub color: ColorImage,
    pub depth: DepthMap,
    pub clean_color: ColorImage,
    pub clean_depth: DepthMap,
    pub mask: Mask,
    /// Standard deviation of the depth noise at each pixel.
    pub noise_scale: ScalarMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub spec: SceneSpec,
    pub object: SyntheticObject,
    pub frames: Vec<SyntheticFrame>,
    pub test_frames: Vec<SyntheticFrame>,
}

/// Camera on a sphere around the origin looking at it, with object `+z` up.
pub fn look_at_origin(azimuth_deg: f64, elevation_deg: f64, distance: f64) -> RigidTransform {
    let (az, el) = (azimuth_deg.to_radians(), elevation_deg.to_radians());
    let c = distance * Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
    let f = -c.normalize();
    let up = Vec3::new(0.0, 0.0, 1.0);
    let r = f.cross(&up).normalize();
    let d = f.cross(&r);
    let m = Mat3::from_columns(&[r, d, f]);
    RigidTransform::from_matrix(&m, c)
}

/// Ray-casts the object. Depth is the camera-frame z of the first hit.
pub fn render_clean(object: &SyntheticObject, camera: &Camera, t_oc: &RigidTransform) -> (ColorImage, DepthMap) {
    let (w, h) = (camera.width, camera.height);
    let r = t_oc.rotation_matrix();
    let o = t_oc.translation;
    let mut color = Grid::filled(w, h, [0.0; 3]);
    let mut depth = Grid::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let dir_c = Vec3::new((x as f64 - camera.cx) / camera.fx, (y as f64 - camera.cy) / camera.fy, 1.0);
            let d = r * dir_c;
            if let Some(t) = object.intersect(&o, &d) {
                *depth.get_mut(x, y) = t;
                *color.get_mut(x, y) = albedo(&(o + d * t));
            }
        }
    }
    (color, depth)
}

/// Renders one frame with Gaussian depth and colour noise.
pub fn capture(object: &SyntheticObject, camera: &Camera, t_oc: &RigidTransform, noise: &NoiseSpec, rng: &mut ChaCha8Rng) -> SyntheticFrame {
    let (clean_color, clean_depth) = render_clean(object, camera, t_oc);
    let mask = clean_depth.map(|d| *d > 0.0);
    let mut color = clean_color.clone();
    let mut depth = clean_depth.clone();
    for k in 0..depth.len() {
        if !mask[k] {
            continue;
        }
        let n: f64 = StandardNormal.sample(rng);
        depth[k] += noise.depth_sigma * n;
        for c in 0..3 {
            let n: f64 = StandardNormal.sample(rng);
            color[k][c] = (color[k][c] + noise.color_sigma * n).clamp(0.0, 1.0);
        }
    }
    let noise_scale = mask.map(|m| if *m { noise.depth_sigma } else { 0.0 });
    SyntheticFrame { camera: *camera, t_oc: *t_oc, color, depth, clean_color, clean_depth, mask, noise_scale }
}

/// Deterministic scene from `(spec, seed)`.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Scene {
    let object = SyntheticObject::new(spec.shape, spec.object_points, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ 0x5CE_E);
    let t = &spec.trajectory;
    let frames = t
        .azimuths_deg()
        .into_iter()
        .map(|az| capture(&object, &spec.camera, &look_at_origin(az, t.elevation_deg, t.distance), &spec.noise, &mut rng))
        .collect();
    let tv = &spec.test_views;
    let test_frames = (0..tv.count)
        .map(|k| {
            let az = t.start_azimuth_deg + tv.azimuth_offset_deg + k as f64 * 360.0 / tv.count.max(1) as f64;
            capture(&object, &spec.camera, &look_at_origin(az, tv.elevation_deg, t.distance), &spec.noise, &mut rng)
        })
        .collect();
    Scene { spec: *spec, object, frames, test_frames }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(shape: ShapeKind) -> SceneSpec {
        SceneSpec {
            shape,
            camera: Camera { fx: 60.0, fy: 60.0, cx: 20.0, cy: 15.0, width: 40, height: 30 },
            object_points: 2000,
            trajectory: Trajectory { frames: 4, ..Default::default() },
            test_views: TestViews { count: 2, ..Default::default() },
            ..Default::default()
        }
    }

    #[test]
    fn zero_noise_depth_matches_analytic_sphere() {
        let spec = SceneSpec { noise: NoiseSpec { depth_sigma: 0.0, color_sigma: 0.0 }, ..small_spec(ShapeKind::Sphere) };
        let scene = generate_scene(&spec, 1);
        let f = &scene.frames[0];
        // the centre pixel ray passes through the sphere centre
        let cx = spec.camera.cx as usize;
        let cy = spec.camera.cy as usize;
        assert!((f.depth.get(cx, cy) - (0.45 - 0.06)).abs() < 1e-9);
        let c = f.t_oc.translation;
        for y in 0..30 {
            for x in 0..40 {
                let d = *f.depth.get(x, y);
                if d > 0.0 {
                    let dir = f.t_oc.rotation_matrix() * Vec3::new((x as f64 - 20.0) / 60.0, (y as f64 - 15.0) / 60.0, 1.0);
                    let p = c + dir * d;
                    assert!((p.norm() - 0.06).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn same_seed_same_scene() {
        let spec = small_spec(ShapeKind::Mug);
        assert_eq!(generate_scene(&spec, 4), generate_scene(&spec, 4));
        assert_ne!(generate_scene(&spec, 4).frames[0].depth, generate_scene(&spec, 5).frames[0].depth);
    }

    #[test]
    fn sixteen_frame_ring_covers_full_circle() {
        let az = Trajectory::default().azimuths_deg();
        assert_eq!(az.len(), 16);
        assert!(az[15] - az[0] >= 350.0);
        let first = look_at_origin(az[0], 30.0, 0.45);
        let last = look_at_origin(az[15], 30.0, 0.45);
        assert!(first.translation_to(&last) < 1e-9);
    }

    #[test]
    fn mask_covers_exactly_valid_depth() {
        let scene = generate_scene(&small_spec(ShapeKind::Box), 2);
        for f in &scene.frames {
            for k in 0..f.depth.len() {
                assert_eq!(f.mask[k], f.clean_depth[k] > 0.0);
            }
        }
    }

    #[test]
    fn camera_looks_at_object() {
        let t = look_at_origin(37.0, 20.0, 0.5);
        let p = t.inverse().apply(&Vec3::zeros());
        assert!(p.x.abs() < 1e-12 && p.y.abs() < 1e-12 && (p.z - 0.5).abs() < 1e-12);
        // object up projects upward in the image
        let up = t.inverse().apply(&Vec3::new(0.0, 0.0, 0.1));
        assert!(up.y < 0.0);
    }
}
