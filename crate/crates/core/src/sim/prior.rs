//! Synthetic multiview generative prior.
//!
//! Views are placed at evenly spaced azimuths around the object, starting at
//! the input view. Each pixel receives colour noise with standard deviation
//! `gain·(base + angle·Δφ/π + hidden·[not seen from the input])`, and the
//! pointmap receives a smooth depth perturbation proportional to the same
//! value. The colour image and its variance are produced by the diffusion
//! sampler, with per-step predictive variances chosen so the propagated
//! variance equals the injected noise variance (times `variance_scale`).
//! Geometry is expressed in a generation frame with a random scale and the
//! relative view poses are perturbed.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};
#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::scene::{look_at_origin, render_clean, SyntheticFrame};
use super::shapes::SyntheticObject;
use crate::diffusion::{
    modulate_confidence, sample_chain, sample_with_uncertainty, LatentState, NoiseSchedule, SamplerConfig, UncertainImage,
    ViewNoisePredictor,
};
use crate::geometry::{RigidTransform, Vec3};
use crate::image::{Grid, Mask, ScalarMap};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorConfig {
    /// Number of generated views.
    pub k: usize,
    pub noise_gain: f64,
    pub base_sigma: f64,
    /// Added standard deviation at 180° from the input view.
    pub angle_sigma: f64,
    /// Added standard deviation where the surface is hidden from the input view.
    pub hidden_sigma: f64,
    /// Depth perturbation in metres per unit of colour standard deviation.
    pub geometry_scale: f64,
    /// Reported variance = `variance_scale` × injected variance; 1 is calibrated.
    pub variance_scale: f64,
    pub steps: usize,
    pub sampler: SamplerConfig,
    /// Generation-frame scale is drawn uniformly from this range.
    pub scale_range: (f64, f64),
    pub pose_noise_deg: f64,
    pub pose_noise_m: f64,
    /// Constant pointmap regressor confidence Ĉ.
    pub raw_confidence: f64,
    pub var_floor: f64,
    pub conf_cap: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            k: 6,
            noise_gain: 1.0,
            base_sigma: 0.003,
            angle_sigma: 0.06,
            hidden_sigma: 0.04,
            geometry_scale: 0.05,
            variance_scale: 1.0,
            steps: 50,
            sampler: SamplerConfig::default(),
            scale_range: (0.6, 1.6),
            pose_noise_deg: 0.05,
            pose_noise_m: 0.0002,
            raw_confidence: 0.01,
            var_floor: 1e-6,
            conf_cap: 1e2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PriorView {
    pub azimuth_deg: f64,
    pub image: UncertainImage,
    /// Points in this view's generated camera frame, generation units.
    pub pointmap: Grid<Vec3>,
    pub valid: Mask,
    pub raw_confidence: ScalarMap,
    /// `modulate_confidence(Ĉ, Var) / conf_cap`, in `(0, 1]`.
    pub confidence: ScalarMap,
    /// This view's camera to view 0's camera, generation units, perturbed.
    pub relative_pose: RigidTransform,
    /// Ground-truth camera to object transform, metric.
    pub true_t_oc: RigidTransform,
    /// Injected colour noise standard deviation.
    pub injected_sigma: ScalarMap,
    pub clean_depth: Grid<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPrior {
    pub views: Vec<PriorView>,
    /// Generation units per metre.
    pub generation_scale: f64,
}

/// Variance of `x_0` produced by unit predictive variance at every step.
pub fn propagation_gain(schedule: &NoiseSchedule) -> Result<f64> {
    let pred = ViewNoisePredictor::new(vec![0.0], vec![1.0])?;
    let x = LatentState::certain(vec![0.0], schedule.steps())?;
    let out = sample_chain(&x, &pred, schedule, &SamplerConfig { samples: 2, seed: 0 })?;
    Ok(out.variance[0])
}

fn angular_distance_deg(a: f64, b: f64) -> f64 {
    let d = (a - b) - 360.0 * ((a - b) / 360.0).floor();
    d.min(360.0 - d)
}

/// Unit-variance smooth random field over pixel coordinates.
struct SmoothField {
    waves: [(f64, f64, f64); 4],
}

impl SmoothField {
    fn new(rng: &mut ChaCha8Rng, width: usize) -> Self {
        let mut waves = [(0.0, 0.0, 0.0); 4];
        for w in &mut waves {
            let freq = TAU / (width as f64) * rng.random_range(0.5..2.0);
            let dir: f64 = rng.random_range(0.0..TAU);
            *w = (freq * dir.cos(), freq * dir.sin(), rng.random_range(0.0..TAU));
        }
        Self { waves }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.waves.iter().map(|(a, b, p)| (a * x + b * y + p).sin()).sum::<f64>() * (2.0 / 4.0f64).sqrt()
    }
}

fn small_rotation(rng: &mut ChaCha8Rng, max_deg: f64, max_m: f64) -> RigidTransform {
    let mut v = || -> Vec3 {
        Vec3::new(StandardNormal.sample(rng), StandardNormal.sample(rng), StandardNormal.sample(rng))
    };
    let w = v().normalize() * max_deg.to_radians();
    let t = v().normalize() * max_m;
    RigidTransform::from_axis_angle(w, t)
}

/// Generates `cfg.k` uncertain views of `object` around `input`.
pub fn synth_diffusion_prior(input: &SyntheticFrame, object: &SyntheticObject, cfg: &PriorConfig, seed: u64) -> Result<DiffusionPrior> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1FF_0510);
    let cam = input.camera;
    let (w, h) = (cam.width, cam.height);
    let c0 = input.t_oc.translation;
    let distance = c0.norm();
    let azimuth0 = c0.y.atan2(c0.x).to_degrees();
    let elevation = (c0.z / distance).asin().to_degrees();
    let schedule = NoiseSchedule::ddim(cfg.steps, 0.0)?;
    let gain = propagation_gain(&schedule)?;
    let gamma = rng.random_range(cfg.scale_range.0..cfg.scale_range.1);
    let input_inv = input.t_oc.inverse();
    let reference = look_at_origin(azimuth0, elevation, distance);

    let mut views = Vec::with_capacity(cfg.k);
    for k in 0..cfg.k {
        let az = azimuth0 + k as f64 * 360.0 / cfg.k as f64;
        let t_oc = look_at_origin(az, elevation, distance);
        let (clean, depth) = render_clean(object, &cam, &t_oc);
        let valid = depth.map(|d| *d > 0.0);
        let angle = angular_distance_deg(az, azimuth0).to_radians() / PI;
        let sigma = Grid::from_fn(w, h, |x, y| {
            let z = *depth.get(x, y);
            if z <= 0.0 {
                return 0.0;
            }
            let p_obj = t_oc.apply(&cam.unproject(x as f64, y as f64, z));
            let p_in = input_inv.apply(&p_obj);
            let seen = match cam.project_camera(&p_in) {
                Ok((u, v, d)) => match cam.pixel_at(u, v) {
                    Some((px, py)) => {
                        let dz = *input.clean_depth.get(px, py);
                        dz > 0.0 && (dz - d).abs() < 0.004
                    }
                    None => false,
                },
                Err(_) => false,
            };
            let hidden = if seen { 0.0 } else { 1.0 };
            cfg.noise_gain * (cfg.base_sigma + cfg.angle_sigma * angle + cfg.hidden_sigma * hidden)
        });

        // colour through the sampler
        let n = w * h;
        let mut target = vec![0.0; 3 * n];
        let mut step_var = vec![0.0; 3 * n];
        for p in 0..n {
            for c in 0..3 {
                let z: f64 = StandardNormal.sample(&mut rng);
                target[3 * p + c] = clean[p][c] + sigma[p] * z;
                step_var[3 * p + c] = cfg.variance_scale * sigma[p] * sigma[p] / gain;
            }
        }
        let traj_noise: Vec<f64> = (0..3 * n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let predictor = ViewNoisePredictor::new(traj_noise, step_var)?;
        let x_t = LatentState::certain(predictor.start_mean(&target, &schedule), schedule.steps())?;
        let sampler = SamplerConfig { seed: cfg.sampler.seed ^ seed.wrapping_add(k as u64), ..cfg.sampler };
        let image = sample_with_uncertainty(&x_t, &predictor, &schedule, &sampler, w, h)?;

        // geometry in the generation frame
        let field = SmoothField::new(&mut rng, w);
        let pointmap = Grid::from_fn(w, h, |x, y| {
            let z = *depth.get(x, y);
            if z <= 0.0 {
                return Vec3::zeros();
            }
            let dz = cfg.geometry_scale * sigma.get(x, y) * field.at(x as f64, y as f64);
            cam.unproject(x as f64, y as f64, z + dz) * gamma
        });
        let raw_confidence = Grid::filled(w, h, cfg.raw_confidence);
        let confidence = modulate_confidence(&raw_confidence, &image.variance, cfg.var_floor, cfg.conf_cap)?.map(|c| c / cfg.conf_cap);

        let true_rel = reference.inverse().compose(&t_oc);
        let noise = if k == 0 { RigidTransform::identity() } else { small_rotation(&mut rng, cfg.pose_noise_deg, cfg.pose_noise_m) };
        let rel = noise.compose(&true_rel);
        let relative_pose = RigidTransform::new(rel.rotation, rel.translation * gamma);

        views.push(PriorView {
            azimuth_deg: az,
            image,
            pointmap,
            valid,
            raw_confidence,
            confidence,
            relative_pose,
            true_t_oc: t_oc,
            injected_sigma: sigma,
            clean_depth: depth,
        });
    }
    Ok(DiffusionPrior { views, generation_scale: gamma })
}
