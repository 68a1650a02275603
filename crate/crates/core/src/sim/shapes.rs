//! Analytic test objects: ray casting, containment and surface sampling.

use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::{PointCloud, Vec3};
use crate::Result;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Primitive {
    Sphere { center: [f64; 3], radius: f64 },
    /// Axis-aligned box.
    Cuboid { center: [f64; 3], half: [f64; 3] },
    /// Capped cylinder with its axis along z.
    Cylinder { center: [f64; 3], radius: f64, half_height: f64 },
}

impl Primitive {
    /// Smallest `t > 0` with `o + t·d` on the surface.
    pub fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        match *self {
            Primitive::Sphere { center, radius } => {
                let oc = o - Vec3::from(center);
                let a = d.norm_squared();
                let b = oc.dot(d);
                let c = oc.norm_squared() - radius * radius;
                let disc = b * b - a * c;
                if disc < 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                [(-b - s) / a, (-b + s) / a].into_iter().find(|t| *t > EPS)
            }
            Primitive::Cuboid { center, half } => {
                let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
                for k in 0..3 {
                    let lo = center[k] - half[k] - o[k];
                    let hi = center[k] + half[k] - o[k];
                    if d[k].abs() < 1e-300 {
                        if lo > 0.0 || hi < 0.0 {
                            return None;
                        }
                        continue;
                    }
                    let (a, b) = (lo / d[k], hi / d[k]);
                    t0 = t0.max(a.min(b));
                    t1 = t1.min(a.max(b));
                }
                if t0 > t1 {
                    return None;
                }
                [t0, t1].into_iter().find(|t| *t > EPS)
            }
            Primitive::Cylinder { center, radius, half_height } => {
                let oc = o - Vec3::from(center);
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > EPS && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                let a = d.x * d.x + d.y * d.y;
                if a > 1e-300 {
                    let b = oc.x * d.x + oc.y * d.y;
                    let c = oc.x * oc.x + oc.y * oc.y - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let s = disc.sqrt();
                        for t in [(-b - s) / a, (-b + s) / a] {
                            if (oc.z + t * d.z).abs() <= half_height {
                                consider(t);
                            }
                        }
                    }
                }
                if d.z.abs() > 1e-300 {
                    for zc in [-half_height, half_height] {
                        let t = (zc - oc.z) / d.z;
                        let (x, y) = (oc.x + t * d.x, oc.y + t * d.y);
                        if x * x + y * y <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best
            }
        }
    }

    /// Strictly inside by more than `margin`.
    pub fn contains(&self, p: &Vec3, margin: f64) -> bool {
        match *self {
            Primitive::Sphere { center, radius } => (p - Vec3::from(center)).norm() < radius - margin,
            Primitive::Cuboid { center, half } => (0..3).all(|k| (p[k] - center[k]).abs() < half[k] - margin),
            Primitive::Cylinder { center, radius, half_height } => {
                let q = p - Vec3::from(center);
                (q.x * q.x + q.y * q.y).sqrt() < radius - margin && q.z.abs() < half_height - margin
            }
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            Primitive::Sphere { radius, .. } => 4.0 * PI * radius * radius,
            Primitive::Cuboid { half, .. } => 8.0 * (half[0] * half[1] + half[1] * half[2] + half[0] * half[2]),
            Primitive::Cylinder { radius, half_height, .. } => TAU * radius * 2.0 * half_height + 2.0 * PI * radius * radius,
        }
    }

    /// Area-uniform surface sample.
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        match *self {
            Primitive::Sphere { center, radius } => {
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(0.0..TAU);
                let r = (1.0 - z * z).sqrt();
                Vec3::from(center) + radius * Vec3::new(r * phi.cos(), r * phi.sin(), z)
            }
            Primitive::Cuboid { center, half } => {
                let areas = [half[1] * half[2], half[0] * half[2], half[0] * half[1]];
                let total: f64 = areas.iter().sum();
                let mut pick = rng.random_range(0.0..total);
                let mut axis = 2;
                for (k, a) in areas.iter().enumerate() {
                    if pick < *a {
                        axis = k;
                        break;
                    }
                    pick -= a;
                }
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                let mut p = Vec3::zeros();
                for k in 0..3 {
                    p[k] = if k == axis { sign * half[k] } else { rng.random_range(-half[k]..half[k]) };
                }
                Vec3::from(center) + p
            }
            Primitive::Cylinder { center, radius, half_height } => {
                let side = TAU * radius * 2.0 * half_height;
                let cap = PI * radius * radius;
                let theta: f64 = rng.random_range(0.0..TAU);
                let p = if rng.random_range(0.0..side + 2.0 * cap) < side {
                    Vec3::new(radius * theta.cos(), radius * theta.sin(), rng.random_range(-half_height..half_height))
                } else {
                    let r = radius * rng.random::<f64>().sqrt();
                    let z = if rng.random_bool(0.5) { half_height } else { -half_height };
                    Vec3::new(r * theta.cos(), r * theta.sin(), z)
                };
                Vec3::from(center) + p
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ShapeKind {
    Sphere,
    Box,
    Cylinder,
    Mug,
    /// Flat slab, used where two views must not share any surface.
    Plate,
}

impl ShapeKind {
    pub const ALL: [ShapeKind; 4] = [ShapeKind::Sphere, ShapeKind::Box, ShapeKind::Cylinder, ShapeKind::Mug];

    pub fn parts(&self) -> Vec<Primitive> {
        match self {
            ShapeKind::Sphere => alloc::vec![Primitive::Sphere { center: [0.0; 3], radius: 0.06 }],
            ShapeKind::Box => alloc::vec![Primitive::Cuboid { center: [0.0; 3], half: [0.05, 0.035, 0.06] }],
            ShapeKind::Cylinder => alloc::vec![Primitive::Cylinder { center: [0.0; 3], radius: 0.04, half_height: 0.07 }],
            ShapeKind::Mug => alloc::vec![
                Primitive::Cylinder { center: [0.0; 3], radius: 0.045, half_height: 0.055 },
                Primitive::Cuboid { center: [0.055, 0.0, 0.03], half: [0.02, 0.008, 0.007] },
                Primitive::Cuboid { center: [0.055, 0.0, -0.03], half: [0.02, 0.008, 0.007] },
                Primitive::Cuboid { center: [0.068, 0.0, 0.0], half: [0.007, 0.008, 0.037] },
            ],
            ShapeKind::Plate => alloc::vec![Primitive::Cuboid { center: [0.0; 3], half: [0.06, 0.06, 0.005] }],
        }
    }

    /// Invariance under a half turn about the z axis.
    pub fn symmetric(&self) -> bool {
        !matches!(self, ShapeKind::Mug)
    }
}

/// Procedural albedo in `[0.25, 0.75]`.
pub fn albedo(p: &Vec3) -> [f64; 3] {
    [
        0.5 + 0.25 * (41.0 * p.x + 23.0 * p.z + 0.3).sin(),
        0.5 + 0.25 * (37.0 * p.y - 19.0 * p.x + 1.7).sin(),
        0.5 + 0.25 * (43.0 * p.z + 29.0 * p.y + 2.9).sin(),
    ]
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticObject {
    pub kind: ShapeKind,
    parts: Vec<Primitive>,
    points: Vec<Vec3>,
    colors: Vec<[f64; 3]>,
    diameter: f64,
}

impl SyntheticObject {
    /// Samples `count` surface points. Symmetric shapes are sampled in
    /// half-turn pairs so the point set itself is symmetric.
    pub fn new(kind: ShapeKind, count: usize, seed: u64) -> Self {
        let parts = kind.parts();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED_0B1E);
        let total: f64 = parts.iter().map(|p| p.area()).sum();
        let symmetric = kind.symmetric();
        let mut points = Vec::with_capacity(count);
        while points.len() < count {
            let mut pick = rng.random_range(0.0..total);
            let mut part = parts[parts.len() - 1];
            for p in &parts {
                if pick < p.area() {
                    part = *p;
                    break;
                }
                pick -= p.area();
            }
            let x = part.sample(&mut rng);
            if parts.iter().any(|q| q.contains(&x, 1e-6)) {
                continue;
            }
            points.push(x);
            if symmetric && points.len() < count {
                points.push(Vec3::new(-x.x, -x.y, x.z));
            }
        }
        let colors = points.iter().map(albedo).collect();
        let mut diameter: f64 = 0.0;
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                diameter = diameter.max((points[i] - points[j]).norm_squared());
            }
        }
        Self { kind, parts, points, colors, diameter: diameter.sqrt() }
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn colors(&self) -> &[[f64; 3]] {
        &self.colors
    }

    /// Largest distance between two model points.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn symmetric(&self) -> bool {
        self.kind.symmetric()
    }

    pub fn cloud(&self) -> Result<PointCloud> {
        PointCloud::new(self.points.clone())
    }

    /// First surface hit along `o + t·d`.
    pub fn intersect(&self, o: &Vec3, d: &Vec3) -> Option<f64> {
        let mut best: Option<f64> = None;
        for part in &self.parts {
            if let Some(t) = part.intersect(o, d) {
                let p = o + d * t;
                if self.parts.iter().any(|q| q.contains(&p, 1e-9)) {
                    // hit lies inside another part; march past it
                    if let Some(t2) = self.intersect_after(o, d, t) {
                        if best.is_none_or(|b| t2 < b) {
                            best = Some(t2);
                        }
                    }
                    continue;
                }
                if best.is_none_or(|b| t < b) {
                    best = Some(t);
                }
            }
        }
        best
    }

    fn intersect_after(&self, o: &Vec3, d: &Vec3, t0: f64) -> Option<f64> {
        let step = 1e-7 / d.norm();
        let o2 = o + d * (t0 + step);
        self.intersect(&o2, d).map(|t| t + t0 + step)
    }
}
