//! Confidence-weighted L1 mapping loss and its analytic gradient.
//!
//! `L = Σ_p C(p)·[S(p) > τ]·(|D(p) − D̂(p)| + λ·Σ_c |C_c(p) − Ĉ_c(p)|)`.
//! The gradient is obtained by a reverse sweep over the depth-sorted
//! Gaussians that rebuilds per-pixel transmittance and keeps suffix sums of
//! the colour and depth contributions behind each Gaussian.

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::render::{composite, project_sorted, RenderSettings};
use super::GaussianField;
use crate::geometry::{Camera, RigidTransform, Vec3};
use crate::image::{check_shape, valid_depth, ColorImage, DepthMap, ScalarMap};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossSettings {
    /// Pixels contribute only where the rendered silhouette exceeds this.
    pub silhouette_threshold: f64,
    pub color_weight: f64,
    pub render: RenderSettings,
}

impl Default for LossSettings {
    fn default() -> Self {
        Self { silhouette_threshold: 0.99, color_weight: 0.5, render: RenderSettings::default() }
    }
}

/// One supervised view of the object.
#[derive(Debug, Clone, PartialEq)]
pub struct MapFrame {
    pub camera: Camera,
    /// Object-to-camera transform.
    pub t_co: RigidTransform,
    pub color: ColorImage,
    pub depth: DepthMap,
    pub confidence: ScalarMap,
}

impl MapFrame {
    pub fn new(camera: Camera, t_co: RigidTransform, color: ColorImage, depth: DepthMap, confidence: ScalarMap) -> Result<Self> {
        let f = Self { camera, t_co, color, depth, confidence };
        f.check()?;
        Ok(f)
    }

    fn check(&self) -> Result<()> {
        if self.color.width() != self.camera.width || self.color.height() != self.camera.height {
            return Err(Error::DimensionMismatch {
                expected: self.camera.pixel_count(),
                actual: self.color.len(),
            });
        }
        check_shape(&self.color, &self.depth)?;
        check_shape(&self.color, &self.confidence)?;
        if self.confidence.as_slice().iter().any(|c| !(*c >= 0.0)) {
            return Err(Error::InvalidInput("confidence must be non-negative"));
        }
        Ok(())
    }
}

/// Gradient of the loss with respect to one Gaussian's natural parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GaussianGrad {
    pub position: Vec3,
    pub radius: f64,
    pub color: [f64; 3],
    pub opacity: f64,
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn mapping_loss(
    field: &GaussianField,
    cam: &Camera,
    t_co: &RigidTransform,
    obs_color: &ColorImage,
    obs_depth: &DepthMap,
    conf: &ScalarMap,
) -> Result<f64> {
    let frame = MapFrame::new(*cam, *t_co, obs_color.clone(), obs_depth.clone(), conf.clone())?;
    Ok(evaluate(field, &frame, &LossSettings::default(), false).0)
}

/// Loss of one frame together with the gradient for every Gaussian.
pub fn mapping_loss_and_grad(field: &GaussianField, frame: &MapFrame, settings: &LossSettings) -> Result<(f64, Vec<GaussianGrad>)> {
    frame.check()?;
    Ok(evaluate(field, frame, settings, true))
}

pub(crate) fn evaluate(field: &GaussianField, frame: &MapFrame, settings: &LossSettings, want_grad: bool) -> (f64, Vec<GaussianGrad>) {
    let cam = &frame.camera;
    let rs = &settings.render;
    let list = project_sorted(field, cam, &frame.t_co, rs);
    let acc = composite(field, cam, &list, rs);
    let n = cam.width * cam.height;

    // per-pixel loss and output-space gradients
    let mut loss = 0.0;
    let mut g_color = vec![[0.0; 3]; n];
    let mut g_depth = vec![0.0; n];
    let mut depth = vec![0.0; n];
    for k in 0..n {
        let t = acc.transmittance[k];
        let s = 1.0 - t;
        let w = frame.confidence[k];
        if !(s > settings.silhouette_threshold) || w == 0.0 {
            continue;
        }
        let obs = frame.color[k];
        for c in 0..3 {
            let r = acc.color[k][c] + t * rs.background[c] - obs[c];
            loss += w * settings.color_weight * r.abs();
            g_color[k][c] = w * settings.color_weight * sign(r);
        }
        let d = acc.depth_num[k] / s;
        depth[k] = d;
        if valid_depth(frame.depth[k]) {
            let r = d - frame.depth[k];
            loss += w * r.abs();
            g_depth[k] = w * sign(r);
        }
    }
    if !want_grad {
        return (loss, Vec::new());
    }

    let mut grads = vec![GaussianGrad::default(); field.len()];
    let mut trans = acc.transmittance.clone();
    let mut suffix_color: Vec<[f64; 3]> = acc
        .transmittance
        .iter()
        .map(|t| [t * rs.background[0], t * rs.background[1], t * rs.background[2]])
        .collect();
    let mut suffix_depth = vec![0.0; n];

    for p in list.iter().rev() {
        let g = &field.gaussians[p.index];
        let (mut d_u, mut d_v, mut d_sx, mut d_sy, mut d_z) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let mut d_color = [0.0; 3];
        let mut d_opacity = 0.0;
        for py in p.y0..=p.y1 {
            for px in p.x0..=p.x1 {
                let k = py * cam.width + px;
                let q = p.q(px, py);
                let gauss = (-0.5 * q).exp();
                let raw = g.opacity * gauss;
                let clamped = raw > rs.alpha_max;
                let alpha = if clamped { rs.alpha_max } else { raw };
                let one_minus = 1.0 - alpha;
                let t_k = trans[k] / one_minus;
                let w_k = alpha * t_k;

                let gc = g_color[k];
                let gd = g_depth[k];
                if gc != [0.0; 3] || gd != 0.0 {
                    let t_final = acc.transmittance[k];
                    let s = 1.0 - t_final;
                    let mut d_alpha = 0.0;
                    for c in 0..3 {
                        d_alpha += gc[c] * (g.color[c] * t_k - suffix_color[k][c] / one_minus);
                        d_color[c] += gc[c] * w_k;
                    }
                    if gd != 0.0 {
                        let dn = p.cam.z * t_k - suffix_depth[k] / one_minus;
                        let ds = t_final / one_minus;
                        d_alpha += gd * (dn - depth[k] * ds) / s;
                        d_z += gd * w_k / s;
                    }
                    if !clamped {
                        d_opacity += d_alpha * gauss;
                        let d_q = -0.5 * alpha * d_alpha;
                        let du = px as f64 - p.u;
                        let dv = py as f64 - p.v;
                        let (sx2, sy2) = (p.sx * p.sx, p.sy * p.sy);
                        d_u += d_q * (-2.0 * du / sx2);
                        d_v += d_q * (-2.0 * dv / sy2);
                        d_sx += d_q * (-2.0 * du * du / (sx2 * p.sx));
                        d_sy += d_q * (-2.0 * dv * dv / (sy2 * p.sy));
                    }
                }

                for c in 0..3 {
                    suffix_color[k][c] += g.color[c] * w_k;
                }
                suffix_depth[k] += p.cam.z * w_k;
                trans[k] = t_k;
            }
        }

        let z = p.cam.z;
        let d_x = d_u * cam.fx / z;
        let d_y = d_v * cam.fy / z;
        let d_zt = d_z - d_u * (p.u - cam.cx) / z - d_v * (p.v - cam.cy) / z - d_sx * p.sx / z - d_sy * p.sy / z;
        let d_cam = Vec3::new(d_x, d_y, d_zt);
        let out = &mut grads[p.index];
        out.position = frame.t_co.rotation.inverse() * d_cam;
        out.radius = d_sx * cam.fx / z + d_sy * cam.fy / z;
        out.color = d_color;
        out.opacity = d_opacity;
    }
    (loss, grads)
}
