//! Render-and-compare pose refinement, failure detection and relocalization.
//!
//! Poses here are camera-to-object transforms `T_OC`. Refinement renders
//! the field at the current pose, pairs observed and rendered surface
//! points with their closest counterparts on the other surface, and steps on
//! the point-to-plane distances of those pairs together with the colour
//! difference between rendered and observed pixels. Plain Gauss-Newton steps
//! explore first and the best iterate is then polished by damped steps that
//! must strictly lower the truncated two-sided residual. A pose from which
//! no damped step improves is returned unchanged.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use nalgebra::{Matrix6, Vector6};

use crate::geometry::{Camera, NearestIndex, RigidTransform, Vec3};
use crate::image::{valid_depth, ColorImage, DepthMap};
use crate::posegraph::{edge_residuals, optimize, GraphEdge, Keyframe, Match, Matcher, PoseGraph, Retriever, SolverConfig};
use crate::splat::{render, GaussianField, RenderOutput};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefineConfig {
    pub max_iters: usize,
    /// Pairs farther apart than this are outliers, metres.
    pub icp_radius: f64,
    /// Required fraction of observed pixels inside the rendered silhouette at the initial pose.
    pub min_silhouette_overlap: f64,
    /// Stop when the pose moves less than this (radians plus metres).
    pub convergence_tol: f64,
    pub silhouette_threshold: f64,
    /// Use every n-th observed pixel.
    pub pixel_stride: usize,
    /// Weight of squared colour differences against squared distances, m².
    pub color_weight: f64,
    /// Colour differences beyond this are outliers.
    pub color_truncation: f64,
}

impl Default for RefineConfig {
    fn default() -> Self {
        Self {
            max_iters: 40,
            icp_radius: 0.05,
            min_silhouette_overlap: 0.3,
            convergence_tol: 1e-7,
            silhouette_threshold: 0.5,
            pixel_stride: 1,
            color_weight: 1e-2,
            color_truncation: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefineResult {
    pub pose: RigidTransform,
    /// Mean distance of inlier pairs at the returned pose, metres.
    pub fit: f64,
    pub residual_init: f64,
    /// Truncated RMS residual at the returned pose, depth and weighted colour.
    pub residual: f64,
    pub overlap: f64,
    pub iterations: usize,
}

/// Back-projected depth pixels that have a normal from their neighbours.
struct Surface {
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
}

impl Surface {
    fn from_depth(cam: &Camera, depth: &DepthMap, keep: impl Fn(usize) -> bool, cfg: &RefineConfig) -> Self {
        let ok = |x: usize, y: usize| {
            let k = depth.index(x, y);
            valid_depth(depth[k]) && keep(k)
        };
        let at = |x: usize, y: usize| cam.unproject(x as f64, y as f64, *depth.get(x, y));
        let nb = |x: usize, y: usize| ok(x, y).then(|| at(x, y));
        let jump = 0.5 * cfg.icp_radius;
        let tangent = |c: &Vec3, a: Option<Vec3>, b: Option<Vec3>| -> Option<Vec3> {
            let a = a.filter(|a| (a - c).norm() < jump);
            let b = b.filter(|b| (b - c).norm() < jump);
            match (a, b) {
                (Some(a), Some(b)) => Some(b - a),
                (Some(a), None) => Some(c - a),
                (None, Some(b)) => Some(b - c),
                (None, None) => None,
            }
        };
        let (w, h) = (depth.width(), depth.height());
        let mut points = Vec::new();
        let mut normals = Vec::new();
        for k in (0..depth.len()).step_by(cfg.pixel_stride.max(1)) {
            let (x, y) = depth.coords(k);
            if !ok(x, y) {
                continue;
            }
            let c = at(x, y);
            let tx = tangent(&c, if x > 0 { nb(x - 1, y) } else { None }, if x + 1 < w { nb(x + 1, y) } else { None });
            let ty = tangent(&c, if y > 0 { nb(x, y - 1) } else { None }, if y + 1 < h { nb(x, y + 1) } else { None });
            let (Some(tx), Some(ty)) = (tx, ty) else { continue };
            let n = tx.cross(&ty);
            let len = n.norm();
            if !(len > 0.0) {
                continue;
            }
            points.push(c);
            normals.push(if n.dot(&c) > 0.0 { -n / len } else { n / len });
        }
        Self { points, normals }
    }
}

#[derive(Clone)]
struct Evaluation {
    residual: f64,
    fit: f64,
    overlap: f64,
    /// Linearised residual rows `(J, e)` in the left perturbation `(ω, v)`.
    rows: Vec<(Vector6<f64>, f64)>,
}

/// Rendered pixels whose colour is used must be this opaque, with their
/// four neighbours.
const OPAQUE: f64 = 0.99;

fn row(y: &Vec3, a: &Vec3, e: f64) -> (Vector6<f64>, f64) {
    let ya = y.cross(a);
    (Vector6::new(ya.x, ya.y, ya.z, a.x, a.y, a.z), e)
}

/// Colour rows for pixels inside the rendered surface. Moving the object by
/// `δ` moves the rendered surface point `y` across the image, so the
/// rendered colour changes by its image gradient along that motion.
fn photometric(
    cam: &Camera,
    out: &RenderOutput,
    obs_color: &ColorImage,
    obs_depth: &DepthMap,
    pose: &RigidTransform,
    cfg: &RefineConfig,
    rows: &mut Vec<(Vector6<f64>, f64)>,
) -> (f64, usize) {
    let (w, h) = (out.depth.width(), out.depth.height());
    let opaque = |x: usize, y: usize| out.silhouette[out.depth.index(x, y)] > OPAQUE;
    let t2 = cfg.color_truncation * cfg.color_truncation;
    let sw = cfg.color_weight.sqrt();
    let (mut sum, mut count) = (0.0, 0usize);
    if !(cfg.color_weight > 0.0) || !obs_color.same_shape(&out.color) {
        return (sum, count);
    }
    for k in (0..out.depth.len()).step_by(cfg.pixel_stride.max(1)) {
        let (x, y) = out.depth.coords(k);
        if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h || !valid_depth(obs_depth[k]) || !valid_depth(out.depth[k]) {
            continue;
        }
        if !(opaque(x, y) && opaque(x - 1, y) && opaque(x + 1, y) && opaque(x, y - 1) && opaque(x, y + 1)) {
            continue;
        }
        let p = cam.unproject(x as f64, y as f64, out.depth[k]);
        let obj = pose.apply(&p);
        let z = p.z;
        let (l, r, u, d) = (out.color.get(x - 1, y), out.color.get(x + 1, y), out.color.get(x, y - 1), out.color.get(x, y + 1));
        count += 1;
        for c in 0..3 {
            let e = out.color[k][c] - obs_color[k][c];
            sum += (e * e).min(t2);
            if e.abs() >= cfg.color_truncation {
                continue;
            }
            let (gx, gy) = (0.5 * (r[c] - l[c]), 0.5 * (d[c] - u[c]));
            // d(colour)/d(camera point) through the pinhole projection
            let dp = Vec3::new(cam.fx * gx / z, cam.fy * gy / z, -(cam.fx * gx * p.x + cam.fy * gy * p.y) / (z * z));
            let (j, e) = row(&obj, &pose.rotate(&dp), e);
            rows.push((j * sw, e * sw));
        }
    }
    (cfg.color_weight * sum, count)
}

/// Sum of truncated point-to-plane distances from `from` to the closest point of `to`.
fn truncated(from: &Surface, to: &Surface, r2: f64, mut visit: impl FnMut(usize, usize, f64)) -> f64 {
    let index = NearestIndex::new(&to.points);
    let mut sum = 0.0;
    for (a, p) in from.points.iter().enumerate() {
        let (b, d2) = index.nearest(p).expect("non-empty surface");
        if d2 <= r2 {
            let e = to.normals[b].dot(&(p - to.points[b]));
            visit(a, b, e);
            sum += (e * e).min(r2);
        } else {
            sum += r2;
        }
    }
    sum
}

fn evaluate(
    field: &GaussianField,
    cam: &Camera,
    color: Option<&ColorImage>,
    depth: &DepthMap,
    pose: &RigidTransform,
    cfg: &RefineConfig,
) -> Evaluation {
    let out = render(field, cam, &pose.inverse());
    let drawn = |k: usize| out.silhouette[k] > cfg.silhouette_threshold;
    let (mut seen, mut inside) = (0usize, 0usize);
    for k in (0..depth.len()).step_by(cfg.pixel_stride.max(1)) {
        if valid_depth(depth[k]) {
            seen += 1;
            inside += drawn(k) as usize;
        }
    }
    let overlap = if seen == 0 { 0.0 } else { inside as f64 / seen as f64 };
    let observed = Surface::from_depth(cam, depth, |_| true, cfg);
    let model = Surface::from_depth(cam, &out.depth, drawn, cfg);
    let r2 = cfg.icp_radius * cfg.icp_radius;
    let total = observed.points.len() + model.points.len();
    if observed.points.is_empty() || model.points.is_empty() {
        let residual = if total == 0 { 0.0 } else { cfg.icp_radius };
        return Evaluation { residual, fit: f64::INFINITY, overlap, rows: Vec::new() };
    }
    let mut fit = 0.0;
    let mut fit_pairs = 0usize;
    let mut rows = Vec::new();
    let forward = truncated(&observed, &model, r2, |a, b, e| {
        fit += e.abs();
        fit_pairs += 1;
        rows.push(row(&pose.apply(&observed.points[a]), &pose.rotate(&model.normals[b]), e));
    });
    let backward = truncated(&model, &observed, r2, |_, b, e| {
        rows.push(row(&pose.apply(&observed.points[b]), &pose.rotate(&observed.normals[b]), -e));
    });
    let (colour, pixels) = match color {
        Some(c) => photometric(cam, &out, c, depth, pose, cfg, &mut rows),
        None => (0.0, 0),
    };
    Evaluation {
        residual: ((forward + backward + colour) / (total + pixels) as f64).sqrt(),
        fit: if fit_pairs == 0 { f64::INFINITY } else { fit / fit_pairs as f64 },
        overlap,
        rows,
    }
}

const DAMPING: [f64; 5] = [1e-6, 1e-4, 1e-2, 1.0, 1e2];

/// First damped step from `pose` that strictly lowers the residual.
fn descend(
    field: &GaussianField,
    cam: &Camera,
    color: &ColorImage,
    depth: &DepthMap,
    pose: &RigidTransform,
    at: &Evaluation,
    cfg: &RefineConfig,
) -> Option<(RigidTransform, Evaluation)> {
    if at.rows.len() < 6 {
        return None;
    }
    DAMPING.iter().find_map(|&lambda| {
        let next = pose.left_update(&gn_step(&at.rows, lambda)?);
        let trial = evaluate(field, cam, Some(color), depth, &next, cfg);
        (trial.residual < at.residual).then_some((next, trial))
    })
}

/// Gauss-Newton step on `Σ (e + J δ)²` for the left perturbation
/// `δ = (ω, v)`, with Marquardt damping `lambda`. A point-to-plane pair
/// `n · (Exp(δ) x - m)` has `J = [x × n, n]`.
fn gn_step(rows: &[(Vector6<f64>, f64)], lambda: f64) -> Option<Vector6<f64>> {
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    for (j, e) in rows {
        h += j * j.transpose();
        g += j * *e;
    }
    let diag = h.diagonal();
    let floor = 1e-12 * h.trace();
    for d in 0..6 {
        h[(d, d)] += lambda * diag[d] + floor;
    }
    h.cholesky().map(|c| -c.solve(&g))
}

/// Refines the camera-to-object pose `init` against the field.
pub fn refine_pose(
    field: &GaussianField,
    cam: &Camera,
    obs_color: &ColorImage,
    obs_depth: &DepthMap,
    init: &RigidTransform,
    cfg: &RefineConfig,
) -> Result<RefineResult> {
    let start = evaluate(field, cam, Some(obs_color), obs_depth, init, cfg);
    if start.overlap < cfg.min_silhouette_overlap {
        return Err(Error::InsufficientOverlap { overlap: start.overlap, required: cfg.min_silhouette_overlap });
    }
    let mut iterations = 0;
    let (mut pose, mut at) = match descend(field, cam, obs_color, obs_depth, init, &start, cfg) {
        None => (*init, start.clone()),
        Some(first) => {
            // explore with plain Gauss-Newton steps, keeping the best iterate
            let mut best = first;
            let mut pose = *init;
            let mut walk = start.clone();
            while iterations < cfg.max_iters && walk.rows.len() >= 6 {
                iterations += 1;
                let Some(delta) = gn_step(&walk.rows, 0.0) else { break };
                let next = pose.left_update(&delta);
                let moved = pose.angle_to(&next) + pose.translation_to(&next);
                pose = next;
                walk = evaluate(field, cam, Some(obs_color), obs_depth, &pose, cfg);
                if walk.residual < best.1.residual {
                    best = (pose, walk.clone());
                }
                if moved < cfg.convergence_tol {
                    break;
                }
            }
            best
        }
    };
    // polish until no damped step improves
    for _ in 0..cfg.max_iters {
        let Some((next, trial)) = descend(field, cam, obs_color, obs_depth, &pose, &at, cfg) else { break };
        pose = next;
        at = trial;
        iterations += 1;
    }
    Ok(RefineResult { pose, fit: at.fit, residual_init: start.residual, residual: at.residual, overlap: start.overlap, iterations })
}

/// Geometric discrepancy of an observation at `pose`: mean inlier distance
/// and silhouette overlap.
pub fn discrepancy(field: &GaussianField, cam: &Camera, obs_depth: &DepthMap, pose: &RigidTransform, cfg: &RefineConfig) -> (f64, f64) {
    let e = evaluate(field, cam, None, obs_depth, pose, cfg);
    (e.fit, e.overlap)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrackStatus {
    Tracking,
    Lost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FailureConfig {
    pub window: usize,
    pub drop_ratio: f64,
    /// Largest acceptable geometric discrepancy, metres.
    pub d_max: f64,
}

impl Default for FailureConfig {
    fn default() -> Self {
        Self { window: 5, drop_ratio: 0.3, d_max: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub pose: RigidTransform,
    history: VecDeque<f64>,
    window: usize,
    pub status: TrackStatus,
}

impl TrackState {
    pub fn new(pose: RigidTransform, window: usize) -> Self {
        Self { pose, history: VecDeque::with_capacity(window.max(1)), window: window.max(1), status: TrackStatus::Tracking }
    }

    /// Appends an inlier fraction, dropping the oldest beyond the window.
    pub fn record(&mut self, inlier_fraction: f64) {
        if self.history.len() == self.window {
            self.history.pop_front();
        }
        self.history.push_back(inlier_fraction);
    }

    pub fn history(&self) -> impl Iterator<Item = &f64> {
        self.history.iter()
    }

    pub fn window_mean(&self) -> Option<f64> {
        if self.history.is_empty() {
            None
        } else {
            Some(self.history.iter().sum::<f64>() / self.history.len() as f64)
        }
    }
}

/// Lost on a sharp drop of the inlier fraction against the window mean or
/// on a large geometric discrepancy.
pub fn detect_failure(state: &TrackState, inlier_fraction: f64, geom_discrepancy: f64, cfg: &FailureConfig) -> TrackStatus {
    let dropped = state.window_mean().is_some_and(|m| inlier_fraction < cfg.drop_ratio * m);
    if dropped || !(geom_discrepancy <= cfg.d_max) {
        TrackStatus::Lost
    } else {
        TrackStatus::Tracking
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RelocalizeConfig {
    pub top_k: usize,
    pub min_inliers: usize,
    pub solver: SolverConfig,
    pub refine: RefineConfig,
    pub failure: FailureConfig,
}

impl Default for RelocalizeConfig {
    fn default() -> Self {
        Self {
            top_k: 3,
            min_inliers: 10,
            solver: SolverConfig::default(),
            refine: RefineConfig::default(),
            failure: FailureConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Relocalization {
    pub pose: RigidTransform,
    pub candidate: usize,
    pub fit: f64,
}

/// Pose of `frame` against the fixed keyframe `kf`. After each solve the
/// matches are trimmed to those within three robust standard deviations of
/// the median residual and the pose is solved again from the keyframe pose.
fn solve_against(kf: &Keyframe, frame: &Keyframe, mut matches: Vec<Match>, solver: &SolverConfig) -> Option<RigidTransform> {
    let mut pose = None;
    for _ in 0..TRIM_ROUNDS {
        let mut local = PoseGraph::new();
        let a = local.add_keyframe(kf.clone());
        local.anchor(a).ok()?;
        let mut query = frame.clone();
        query.pose = kf.pose;
        let b = local.add_keyframe(query);
        local.add_edge(GraphEdge::new(a, b, matches.clone()).ok()?).ok()?;
        optimize(&mut local, solver).ok()?;
        pose = Some(local.keyframe(b).pose);
        let residuals = edge_residuals(local.keyframe(a), local.keyframe(b), &local.edges()[0], solver);
        let mut norms: Vec<f64> = residuals.iter().map(|r| (r.scaled * r.weight).norm()).collect();
        norms.sort_by(f64::total_cmp);
        let Some(&median) = norms.get(norms.len() / 2) else { break };
        let limit = 3.0 * 1.4826 * median;
        let kept: Vec<Match> = residuals
            .iter()
            .filter(|r| (r.scaled * r.weight).norm() <= limit)
            .map(|r| matches[r.match_index])
            .collect();
        if kept.len() == matches.len() || kept.len() < 3 {
            break;
        }
        matches = kept;
    }
    pose
}

const TRIM_ROUNDS: usize = 4;

/// Recovers the pose of `frame` (a keyframe-shaped view whose pose is
/// unknown) from retrieved keyframes. Each candidate in rank order is
/// matched, the frame pose alone is solved against it, and the first pose
/// whose discrepancy to the field passes the failure gate is accepted.
#[allow(clippy::too_many_arguments)]
pub fn relocalize(
    state: &mut TrackState,
    graph: &PoseGraph,
    field: &GaussianField,
    frame: &Keyframe,
    cam: &Camera,
    obs_depth: &DepthMap,
    retriever: &dyn Retriever,
    matcher: &dyn Matcher,
    cfg: &RelocalizeConfig,
) -> Result<Relocalization> {
    let candidates = retriever.rank(&frame.descriptor, graph, &[], cfg.top_k);
    for c in candidates {
        let kf = graph.keyframe(c);
        let result = match matcher.match_keyframes(kf, frame) {
            Ok(r) => r,
            Err(Error::NoCovisibility) => continue,
            Err(e) => return Err(e),
        };
        if result.inliers < cfg.min_inliers || result.matches.is_empty() {
            continue;
        }
        let Some(pose) = solve_against(kf, frame, result.matches, &cfg.solver) else { continue };
        let (fit, overlap) = discrepancy(field, cam, obs_depth, &pose, &cfg.refine);
        if overlap >= cfg.refine.min_silhouette_overlap && fit <= cfg.failure.d_max {
            state.pose = pose;
            state.status = TrackStatus::Tracking;
            return Ok(Relocalization { pose, candidate: c, fit });
        }
    }
    Err(Error::RelocalizationFailed)
}
