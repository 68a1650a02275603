//! End-to-end runner: synthetic scene, generated prior, alignment, seeding,
//! tracking with a keyframe graph, map optimization and evaluation.
//!
//! Frame 0 is the gauge: its pose is the ground truth and its keyframe is
//! anchored. Everything after it is estimated. The prior and its alignment
//! depend only on the scene and seed and are shared by all variants.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use splatpose_core::geometry::{align_generated_to_real, AlignParams, Alignment, Camera, PointCloud, RigidTransform, Vec3};
use splatpose_core::image::{ColorImage, Grid, Mask, ScalarMap};
use splatpose_core::posegraph::{
    descriptor, detect_loop_closures, optimize, try_insert_keyframe, DescriptorRetriever, Insertion, Keyframe,
    KeyframeKind, MatchResult, Matcher, PoseGraph, SolverConfig,
};
use splatpose_core::sim::{
    add_auc, chamfer, generate_scene, psnr, synth_diffusion_prior, DiffusionPrior, GtView, MatcherConfig, PriorConfig,
    Scene, SceneSpec, SyntheticFrame, SyntheticMatcher, AUC_THRESHOLD,
};
use splatpose_core::splat::{
    optimize_map, render, seed_from_pointcloud, voxel_fuse, GaussianField, MapFrame, MapOptimizerConfig, SeedParams,
};
use splatpose_core::tracking::{
    detect_failure, refine_pose, relocalize, FailureConfig, RefineConfig, RelocalizeConfig, TrackState, TrackStatus,
};

use crate::error::{AtStage, Error, Result, Stage};
use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Toggles {
    /// Weight generated views by their modulated confidence; uniform otherwise.
    pub uncertainty_on: bool,
    pub bundle_adjust_on: bool,
    pub diffusion_frames_in_graph: bool,
}

impl Default for Toggles {
    fn default() -> Self {
        Self { uncertainty_on: true, bundle_adjust_on: true, diffusion_frames_in_graph: true }
    }
}

impl Toggles {
    pub fn label(&self) -> String {
        let mut off = Vec::new();
        if !self.uncertainty_on {
            off.push("no-uncertainty");
        }
        if !self.bundle_adjust_on {
            off.push("no-ba");
        }
        if !self.diffusion_frames_in_graph {
            off.push("no-diffusion-frames");
        }
        if off.is_empty() {
            "full".to_string()
        } else {
            off.join("+")
        }
    }

    /// `self` followed by each variant with one more toggle switched off.
    pub fn with_ablations(&self) -> Vec<Toggles> {
        let mut out = vec![*self];
        if self.uncertainty_on {
            out.push(Toggles { uncertainty_on: false, ..*self });
        }
        if self.bundle_adjust_on {
            out.push(Toggles { bundle_adjust_on: false, ..*self });
        }
        if self.diffusion_frames_in_graph {
            out.push(Toggles { diffusion_frames_in_graph: false, ..*self });
        }
        out
    }
}

/// How reference frames are picked from the captured sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewSampling {
    /// Evenly spaced over the sequence.
    Even,
    /// The first frames.
    Prefix,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineSettings {
    pub view_sampling: ViewSampling,
    /// Per-frame odometry noise used to initialize tracking.
    pub odometry_sigma_deg: f64,
    pub odometry_sigma_m: f64,
    pub refine: RefineConfig,
    pub failure: FailureConfig,
    pub relocalize_top_k: usize,
    pub relocalize_min_inliers: usize,
    pub matcher: MatcherConfig,
    /// A frame becomes a keyframe when it shares fewer than this fraction of
    /// `matcher.max_matches` inliers with the latest keyframe.
    pub keyframe_inlier_ratio: f64,
    pub loop_top_k: usize,
    pub loop_min_inliers: usize,
    /// Voxel edge for fusing observations into map seeds, metres.
    pub voxel: f64,
    pub seed: SeedParams,
    pub align: AlignParams,
    pub map: MapOptimizerConfig,
    /// Initial error of held-out test poses before refinement.
    pub test_perturbation_deg: f64,
    pub test_perturbation_m: f64,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            view_sampling: ViewSampling::Even,
            odometry_sigma_deg: 1.0,
            odometry_sigma_m: 0.005,
            refine: RefineConfig::default(),
            failure: FailureConfig::default(),
            relocalize_top_k: 3,
            relocalize_min_inliers: 10,
            matcher: MatcherConfig::default(),
            keyframe_inlier_ratio: 0.99,
            loop_top_k: 4,
            loop_min_inliers: 20,
            voxel: 0.004,
            seed: SeedParams::default(),
            align: AlignParams::default(),
            map: MapOptimizerConfig { iters: 50, ..MapOptimizerConfig::default() },
            test_perturbation_deg: 2.0,
            test_perturbation_m: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Scene spec JSON; `scene` is used when absent.
    pub scene_path: Option<PathBuf>,
    pub scene: SceneSpec,
    pub view_counts: Vec<usize>,
    /// Generated views: `k`, Monte Carlo samples `sampler.samples`, steps.
    pub diffusion: PriorConfig,
    pub solver: SolverConfig,
    pub toggles: Toggles,
    /// Also run every single-toggle ablation of `toggles`.
    pub ablations: bool,
    pub seed: u64,
    /// Number of consecutive seeds starting at `seed`.
    pub seeds: usize,
    pub out: Option<PathBuf>,
    pub pipeline: PipelineSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scene_path: None,
            scene: SceneSpec::default(),
            view_counts: vec![1, 8, 16],
            diffusion: PriorConfig::default(),
            solver: SolverConfig::with_sigma(4e-6),
            toggles: Toggles::default(),
            ablations: false,
            seed: 0,
            seeds: 1,
            out: None,
            pipeline: PipelineSettings::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        io::read_json(path).map_err(|e| Error::Config(e.to_string()))
    }

    /// The scene spec, read from `scene_path` when set.
    pub fn scene_spec(&self) -> Result<SceneSpec> {
        match &self.scene_path {
            Some(p) => io::read_json(p).map_err(|e| Error::Config(e.to_string())),
            None => Ok(self.scene),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.scene_spec()?;
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.view_counts.is_empty() || self.view_counts.contains(&0) {
            return bad("view counts must be at least 1");
        }
        if self.view_counts.iter().any(|&v| v > spec.trajectory.frames) {
            return bad("a view count exceeds the number of captured frames");
        }
        if self.seeds == 0 {
            return bad("seeds must be at least 1");
        }
        if self.diffusion.k == 0 || self.diffusion.steps == 0 {
            return bad("the prior needs at least one view and one step");
        }
        if spec.camera.validate().is_err() {
            return bad("invalid camera intrinsics");
        }
        if self.solver.validate().is_err() {
            return bad("invalid solver configuration");
        }
        if !(self.pipeline.voxel > 0.0) {
            return bad("voxel size must be positive");
        }
        Ok(())
    }
}

/// A generated view placed in the object frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedView {
    /// Camera to object, from the alignment.
    pub pose: RigidTransform,
    /// Metric camera-frame points.
    pub points: Grid<Vec3>,
    pub valid: Mask,
    pub color: ColorImage,
    pub confidence: ScalarMap,
    pub descriptor: Vec<f64>,
    pub truth: GtView,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub prior: DiffusionPrior,
    /// Generation frame of view 0 to the metric camera frame of frame 0.
    pub alignment: Alignment,
    pub views: Vec<GeneratedView>,
    pub timings: Vec<(Stage, f64)>,
}

/// Metrics of one case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub object: String,
    pub variant: String,
    pub views: usize,
    pub seed: u64,
    pub add_auc: f64,
    pub adds_auc: f64,
    pub chamfer: f64,
    pub psnr: f64,
    pub keyframes: usize,
    pub lost_frames: usize,
    pub relocalized: usize,
    pub failed_relocalizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRow {
    pub variant: String,
    pub views: usize,
    pub seed: u64,
    /// `reference` or `test`.
    pub set: String,
    pub frame_id: usize,
    pub qw: f64,
    pub qx: f64,
    pub qy: f64,
    pub qz: f64,
    pub tx: f64,
    pub ty: f64,
    pub tz: f64,
    pub fit_score: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub variant: String,
    pub views: usize,
    pub seed: u64,
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct CaseOutput {
    pub metrics: MetricsRow,
    pub poses: Vec<PoseRow>,
    pub timings: Vec<TimingRow>,
    pub field: GaussianField,
    pub graph: PoseGraph,
    /// Cost trace of the final graph optimization.
    pub costs: Vec<f64>,
}

pub fn reference_indices(total: usize, n: usize, sampling: ViewSampling) -> Vec<usize> {
    let n = n.clamp(1, total.max(1));
    match sampling {
        ViewSampling::Prefix => (0..n).collect(),
        ViewSampling::Even => (0..n).map(|k| k * total / n).collect(),
    }
}

fn small_motion(rng: &mut ChaCha8Rng, sigma_rad: f64, sigma_m: f64) -> RigidTransform {
    let mut v = || Vec3::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng));
    let w = v() * sigma_rad;
    let t = v() * sigma_m;
    RigidTransform::from_axis_angle(w, t)
}

fn fixed_motion(rng: &mut ChaCha8Rng, angle_rad: f64, dist_m: f64) -> RigidTransform {
    let mut v = || Vec3::new(StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng), StandardNormal.sample(&mut *rng));
    let w = v().normalize() * angle_rad;
    let t = v().normalize() * dist_m;
    RigidTransform::from_axis_angle(w, t)
}

fn depth_points(cam: &Camera, depth: &Grid<f64>) -> Grid<Vec3> {
    Grid::from_fn(cam.width, cam.height, |x, y| {
        let z = *depth.get(x, y);
        if z > 0.0 {
            cam.unproject(x as f64, y as f64, z)
        } else {
            Vec3::zeros()
        }
    })
}

fn real_view(f: &SyntheticFrame) -> GtView {
    GtView { camera: f.camera, t_oc: f.t_oc, depth: f.clean_depth.clone(), object: 0, generated: false }
}

fn real_keyframe(f: &SyntheticFrame, tag: usize, pose: RigidTransform) -> splatpose_core::Result<Keyframe> {
    let valid = f.depth.map(|d| *d > 0.0);
    let conf = Grid::filled(f.camera.width, f.camera.height, 1.0);
    Keyframe::new(KeyframeKind::Real, pose, depth_points(&f.camera, &f.depth), valid, conf, descriptor(&f.color), tag)
}

pub fn simulate(spec: &SceneSpec, seed: u64) -> Scene {
    generate_scene(spec, seed)
}

/// Generates the prior from frame 0, aligns it to frame 0's depth and
/// places every generated view in the object frame.
pub fn initialize(scene: &Scene, prior_cfg: &PriorConfig, settings: &PipelineSettings, seed: u64) -> Result<Initialization> {
    let f0 = &scene.frames[0];
    let clock = Instant::now();
    let prior = synth_diffusion_prior(f0, &scene.object, prior_cfg, seed).at(Stage::Prior)?;
    let prior_s = clock.elapsed().as_secs_f64();

    let clock = Instant::now();
    let v0 = &prior.views[0];
    let gen: Vec<Vec3> = (0..v0.pointmap.len()).filter(|&k| v0.valid[k]).map(|k| v0.pointmap[k]).collect();
    let real_pts = depth_points(&f0.camera, &f0.depth);
    let real: Vec<Vec3> = (0..real_pts.len()).filter(|&k| f0.depth[k] > 0.0).map(|k| real_pts[k]).collect();
    let gen = PointCloud::new(gen).at(Stage::Align)?;
    let real = PointCloud::new(real).at(Stage::Align)?;
    let alignment = align_generated_to_real(&gen, &real, &settings.align).at(Stage::Align)?;
    let s = alignment.transform.scale();
    let rs = alignment.transform.rigid;
    let views = prior
        .views
        .iter()
        .map(|v| {
            let rel = v.relative_pose;
            let to_c0 = RigidTransform::new(rs.rotation * rel.rotation, rs.rotation * (rel.translation * s) + rs.translation);
            GeneratedView {
                pose: f0.t_oc.compose(&to_c0),
                points: v.pointmap.map(|p| p * s),
                valid: v.valid.clone(),
                color: v.image.rgb.clone(),
                confidence: v.confidence.clone(),
                descriptor: descriptor(&v.image.rgb),
                truth: GtView {
                    camera: f0.camera,
                    t_oc: v.true_t_oc,
                    depth: v.clean_depth.clone(),
                    object: 0,
                    generated: true,
                },
            }
        })
        .collect();
    let align_s = clock.elapsed().as_secs_f64();
    Ok(Initialization { prior, alignment, views, timings: vec![(Stage::Prior, prior_s), (Stage::Align, align_s)] })
}

/// Camera-frame observations with fusion weights.
struct Source {
    points: Vec<Vec3>,
    colors: Vec<[f64; 3]>,
    weights: Vec<f64>,
}

impl Source {
    fn real(f: &SyntheticFrame) -> Self {
        let pts = depth_points(&f.camera, &f.depth);
        let keep: Vec<usize> = (0..pts.len()).filter(|&k| f.depth[k] > 0.0).collect();
        Self {
            points: keep.iter().map(|&k| pts[k]).collect(),
            colors: keep.iter().map(|&k| f.color[k]).collect(),
            weights: vec![1.0; keep.len()],
        }
    }

    fn generated(v: &GeneratedView, weighted: bool) -> Self {
        let keep: Vec<usize> = (0..v.points.len()).filter(|&k| v.valid[k]).collect();
        Self {
            points: keep.iter().map(|&k| v.points[k]).collect(),
            colors: keep.iter().map(|&k| v.color[k]).collect(),
            weights: keep.iter().map(|&k| if weighted { v.confidence[k] } else { 1.0 }).collect(),
        }
    }
}

fn fuse(sources: &[(RigidTransform, &Source)], settings: &PipelineSettings) -> splatpose_core::Result<GaussianField> {
    let (mut pts, mut cols, mut ws) = (Vec::new(), Vec::new(), Vec::new());
    for (pose, s) in sources {
        pts.extend(s.points.iter().map(|p| pose.apply(p)));
        cols.extend_from_slice(&s.colors);
        ws.extend_from_slice(&s.weights);
    }
    let fused = voxel_fuse(&pts, &cols, &ws, settings.voxel)?;
    seed_from_pointcloud(&fused.cloud()?, &fused.colors, &settings.seed)
}

struct Timer {
    rows: Vec<(Stage, f64)>,
}

impl Timer {
    fn add(&mut self, stage: Stage, since: Instant) {
        let s = since.elapsed().as_secs_f64();
        match self.rows.iter_mut().find(|(st, _)| *st == stage) {
            Some(r) => r.1 += s,
            None => self.rows.push((stage, s)),
        }
    }
}

/// Bundle adjustment; keyframes without any active constraint are anchored
/// at their tracked pose.
fn adjust(graph: &mut PoseGraph, solver: &SolverConfig) -> splatpose_core::Result<Vec<f64>> {
    loop {
        match optimize(graph, solver) {
            Ok(r) => return Ok(r.costs),
            Err(splatpose_core::Error::DisconnectedGraph(id)) => graph.anchor(id)?,
            Err(e) => return Err(e),
        }
    }
}

/// Reference frame bookkeeping during tracking.
struct Tracked {
    frame: usize,
    pose: RigidTransform,
    /// Keyframe id, or the keyframe the frame was tracked against with that
    /// keyframe's pose at the time.
    keyframe: Option<usize>,
    reference: Option<(usize, RigidTransform)>,
    fit: f64,
    status: &'static str,
}

fn refresh(tracked: &mut [Tracked], graph: &PoseGraph) {
    for t in tracked.iter_mut() {
        if let Some(id) = t.keyframe {
            t.pose = graph.keyframe(id).pose;
        } else if let Some((id, old)) = t.reference {
            let new = graph.keyframe(id).pose;
            t.pose = new.compose(&old.inverse()).compose(&t.pose);
            t.reference = Some((id, new));
        }
    }
}

/// Runs one `(views, toggles)` case on a scene with its shared initialization.
pub fn run_case(scene: &Scene, init: &Initialization, views: usize, toggles: &Toggles, cfg: &RunConfig, seed: u64) -> Result<CaseOutput> {
    let st = &cfg.pipeline;
    let mut timer = Timer { rows: init.timings.clone() };
    let refs = reference_indices(scene.frames.len(), views, st.view_sampling);
    let f0 = &scene.frames[refs[0]];
    let gauge = f0.t_oc;

    let clock = Instant::now();
    let gen_sources: Vec<Source> = init.views.iter().map(|v| Source::generated(v, toggles.uncertainty_on)).collect();
    let real_sources: Vec<Source> = refs.iter().map(|&i| Source::real(&scene.frames[i])).collect();
    let map_sources = |tracked: &[Tracked], keyframes_only: bool| -> Vec<(RigidTransform, &Source)> {
        let mut out: Vec<(RigidTransform, &Source)> = init.views.iter().zip(&gen_sources).map(|(v, s)| (v.pose, s)).collect();
        for (t, s) in tracked.iter().zip(&real_sources) {
            if !keyframes_only || t.keyframe.is_some() {
                out.push((t.pose, s));
            }
        }
        out
    };
    let mut tracked = vec![Tracked { frame: refs[0], pose: gauge, keyframe: None, reference: None, fit: 0.0, status: "gauge" }];
    let mut matcher = SyntheticMatcher::new(MatcherConfig { seed: st.matcher.seed ^ seed, ..st.matcher });
    let mut graph = PoseGraph::new();
    let tag0 = matcher.register(real_view(f0));
    let kf0 = graph.add_keyframe(real_keyframe(f0, tag0, gauge).at(Stage::Seed)?);
    graph.anchor(kf0).at(Stage::Seed)?;
    tracked[0].keyframe = Some(kf0);
    if toggles.diffusion_frames_in_graph {
        for v in &init.views {
            let tag = matcher.register(v.truth.clone());
            let conf = if toggles.uncertainty_on { v.confidence.clone() } else { v.confidence.map(|_| 1.0) };
            let kf = Keyframe::new(KeyframeKind::Diffusion, v.pose, v.points.clone(), v.valid.clone(), conf, v.descriptor.clone(), tag)
                .at(Stage::Seed)?;
            graph.add_keyframe(kf);
        }
    }
    let mut field = fuse(&map_sources(&tracked, true), st).at(Stage::Seed)?;
    timer.add(Stage::Seed, clock);

    let clock = Instant::now();
    let reloc_cfg = RelocalizeConfig {
        top_k: st.relocalize_top_k,
        min_inliers: st.relocalize_min_inliers,
        solver: cfg.solver,
        refine: st.refine,
        failure: st.failure,
    };
    let threshold = (st.keyframe_inlier_ratio * st.matcher.max_matches as f64).round() as usize;
    let mut state = TrackState::new(gauge, st.failure.window);
    let mut odo_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0D0_3E7E);
    let mut last_kf = kf0;
    let (mut lost, mut relocalized, mut failed) = (0, 0, 0);
    for r in 1..refs.len() {
        let f = &scene.frames[refs[r]];
        let prev = &scene.frames[refs[r - 1]];
        let noise = small_motion(&mut odo_rng, st.odometry_sigma_deg.to_radians(), st.odometry_sigma_m);
        let odometry = prev.t_oc.inverse().compose(&f.t_oc).compose(&noise);
        let init_pose = tracked[r - 1].pose.compose(&odometry);

        let (mut pose, mut fit, overlap) = match refine_pose(&field, &f.camera, &f.color, &f.depth, &init_pose, &st.refine) {
            Ok(res) => (res.pose, res.fit, res.overlap),
            Err(splatpose_core::Error::InsufficientOverlap { overlap, .. }) => (init_pose, f64::INFINITY, overlap),
            Err(e) => return Err(Error::Pipeline { stage: Stage::Track, source: e }),
        };
        let tag = matcher.register(real_view(f));
        let mut status = "tracking";
        if detect_failure(&state, overlap, fit, &st.failure) == TrackStatus::Lost {
            lost += 1;
            state.status = TrackStatus::Lost;
            let query = real_keyframe(f, tag, init_pose).at(Stage::Track)?;
            match relocalize(&mut state, &graph, &field, &query, &f.camera, &f.depth, &DescriptorRetriever::L2, &matcher, &reloc_cfg) {
                Ok(rel) => {
                    relocalized += 1;
                    pose = rel.pose;
                    fit = rel.fit;
                    status = "relocalized";
                }
                Err(splatpose_core::Error::RelocalizationFailed) => {
                    failed += 1;
                    status = "failed";
                }
                Err(e) => return Err(Error::Pipeline { stage: Stage::Track, source: e }),
            }
        } else {
            state.record(overlap);
        }
        state.pose = pose;

        let kf = real_keyframe(f, tag, pose).at(Stage::Track)?;
        let result = match matcher.match_keyframes(graph.keyframe(last_kf), &kf) {
            Ok(m) => m,
            Err(splatpose_core::Error::NoCovisibility) => MatchResult::default(),
            Err(e) => return Err(Error::Pipeline { stage: Stage::Track, source: e }),
        };
        let mut entry = Tracked { frame: refs[r], pose, keyframe: None, reference: None, fit, status };
        match try_insert_keyframe(&mut graph, kf, Some(last_kf), &result, threshold).at(Stage::Track)? {
            Insertion::Inserted { id, .. } => {
                entry.keyframe = Some(id);
                tracked.push(entry);
                last_kf = id;
                detect_loop_closures(&mut graph, id, &DescriptorRetriever::L2, &matcher, st.loop_top_k, st.loop_min_inliers)
                    .at(Stage::Track)?;
                if toggles.bundle_adjust_on {
                    adjust(&mut graph, &cfg.solver).at(Stage::Track)?;
                    refresh(&mut tracked, &graph);
                }
                field = fuse(&map_sources(&tracked, true), st).at(Stage::Track)?;
            }
            Insertion::Skipped => {
                entry.reference = Some((last_kf, graph.keyframe(last_kf).pose));
                tracked.push(entry);
            }
        }
    }
    timer.add(Stage::Track, clock);

    let clock = Instant::now();
    let costs = if toggles.bundle_adjust_on {
        let costs = adjust(&mut graph, &cfg.solver).at(Stage::Optimize)?;
        refresh(&mut tracked, &graph);
        costs
    } else {
        Vec::new()
    };
    timer.add(Stage::Optimize, clock);

    // frames that never became keyframes were tracked against an early map
    let clock = Instant::now();
    let keyframe_field = fuse(&map_sources(&tracked, true), st).at(Stage::Track)?;
    for t in tracked.iter_mut().filter(|t| t.keyframe.is_none() && t.status != "failed") {
        let f = &scene.frames[t.frame];
        if let Ok(res) = refine_pose(&keyframe_field, &f.camera, &f.color, &f.depth, &t.pose, &st.refine) {
            if res.fit <= st.failure.d_max {
                t.pose = res.pose;
                t.fit = res.fit;
            }
        }
    }
    timer.add(Stage::Track, clock);

    let clock = Instant::now();
    let seeded = fuse(&map_sources(&tracked, true), st).at(Stage::Map)?;
    let mut frames = Vec::new();
    for t in tracked.iter().filter(|t| t.keyframe.is_some()) {
        let f = &scene.frames[t.frame];
        let conf = Grid::filled(f.camera.width, f.camera.height, 1.0);
        frames.push(MapFrame::new(f.camera, t.pose.inverse(), f.color.clone(), f.depth.clone(), conf).at(Stage::Map)?);
    }
    for v in &init.views {
        let depth = Grid::from_fn(v.points.width(), v.points.height(), |x, y| if *v.valid.get(x, y) { v.points.get(x, y).z } else { 0.0 });
        let conf = if toggles.uncertainty_on { v.confidence.clone() } else { v.confidence.map(|_| 1.0) };
        frames.push(MapFrame::new(v.truth.camera, v.pose.inverse(), v.color.clone(), depth, conf).at(Stage::Map)?);
    }
    let (field, _) = optimize_map(&seeded, &frames, &st.map).at(Stage::Map)?;
    timer.add(Stage::Map, clock);

    let clock = Instant::now();
    let mut test_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7E57_0FF5);
    let mut est = Vec::new();
    let mut gt = Vec::new();
    let mut poses = Vec::new();
    let variant = toggles.label();
    let row = |set: &str, frame_id: usize, p: &RigidTransform, fit: f64, status: &str| {
        let q = io::TransformRecord::from_rigid(p);
        PoseRow {
            variant: variant.clone(),
            views,
            seed,
            set: set.to_string(),
            frame_id,
            qw: q.qw,
            qx: q.qx,
            qy: q.qy,
            qz: q.qz,
            tx: q.tx,
            ty: q.ty,
            tz: q.tz,
            fit_score: fit,
            status: status.to_string(),
        }
    };
    for t in &tracked {
        est.push(t.pose);
        gt.push(scene.frames[t.frame].t_oc);
        poses.push(row("reference", t.frame, &t.pose, t.fit, t.status));
    }
    let mut psnr_sum = 0.0;
    let mut psnr_n = 0usize;
    for (k, f) in scene.test_frames.iter().enumerate() {
        let start = fixed_motion(&mut test_rng, st.test_perturbation_deg.to_radians(), st.test_perturbation_m).compose(&f.t_oc);
        let (pose, fit, status) = match refine_pose(&field, &f.camera, &f.color, &f.depth, &start, &st.refine) {
            Ok(r) => (r.pose, r.fit, "tracking"),
            Err(splatpose_core::Error::InsufficientOverlap { .. }) => (start, f64::INFINITY, "lost"),
            Err(e) => return Err(Error::Pipeline { stage: Stage::Eval, source: e }),
        };
        est.push(pose);
        gt.push(f.t_oc);
        poses.push(row("test", k, &pose, fit, status));
        let p = psnr(&render(&field, &f.camera, &f.t_oc.inverse()).color, &f.clean_color).at(Stage::Eval)?;
        if p.is_finite() {
            psnr_sum += p;
            psnr_n += 1;
        }
    }
    let (add, adds) = add_auc(&est, &gt, &scene.object, AUC_THRESHOLD).at(Stage::Eval)?;
    let centers = PointCloud::new(field.centers()).at(Stage::Eval)?;
    let cd = chamfer(&centers, &scene.object.cloud().at(Stage::Eval)?).at(Stage::Eval)?;
    timer.add(Stage::Eval, clock);

    let metrics = MetricsRow {
        object: format!("{:?}", scene.spec.shape).to_lowercase(),
        variant: variant.clone(),
        views,
        seed,
        add_auc: add,
        adds_auc: adds,
        chamfer: cd,
        psnr: if psnr_n > 0 { psnr_sum / psnr_n as f64 } else { f64::INFINITY },
        keyframes: graph.keyframes().iter().filter(|k| k.kind() == KeyframeKind::Real).count(),
        lost_frames: lost,
        relocalized,
        failed_relocalizations: failed,
    };
    let timings = timer
        .rows
        .iter()
        .map(|(s, secs)| {
            log::info!("seed {seed} {variant} v{views}: {s} {secs:.3} s");
            TimingRow { variant: variant.clone(), views, seed, stage: s.name().to_string(), seconds: *secs }
        })
        .collect();
    Ok(CaseOutput { metrics, poses, timings, field, graph, costs })
}

/// All cases of one seed: every view count under every variant.
pub fn run_seed(cfg: &RunConfig, spec: &SceneSpec, seed: u64) -> Result<Vec<CaseOutput>> {
    let clock = Instant::now();
    let scene = simulate(spec, seed);
    let sim_s = clock.elapsed().as_secs_f64();
    let mut init = initialize(&scene, &cfg.diffusion, &cfg.pipeline, seed)?;
    init.timings.insert(0, (Stage::Simulate, sim_s));
    let variants = if cfg.ablations { cfg.toggles.with_ablations() } else { vec![cfg.toggles] };
    let mut out = Vec::new();
    for t in &variants {
        for &v in &cfg.view_counts {
            out.push(run_case(&scene, &init, v, t, cfg, seed)?);
        }
    }
    Ok(out)
}

/// Runs every seed in parallel; results are in seed order.
pub fn run_pipeline(cfg: &RunConfig) -> Result<Vec<CaseOutput>> {
    cfg.validate()?;
    let spec = cfg.scene_spec()?;
    let seeds: Vec<u64> = (0..cfg.seeds as u64).map(|k| cfg.seed + k).collect();
    let per_seed: Vec<Result<Vec<CaseOutput>>> = seeds.par_iter().map(|&s| run_seed(cfg, &spec, s)).collect();
    let mut out = Vec::new();
    for r in per_seed {
        out.extend(r?);
    }
    Ok(out)
}

/// Writes `metrics.csv`, `metrics.json`, `poses.csv`, `timings.csv`, and the
/// map, graph and solver trace of the first case at the top level; every
/// case also gets its own directory under `cases/`.
pub fn write_outputs(dir: &Path, cfg: &RunConfig, cases: &[CaseOutput]) -> Result<()> {
    io::create_dir(dir)?;
    io::write_json(&dir.join("config.json"), cfg)?;
    let metrics: Vec<MetricsRow> = cases.iter().map(|c| c.metrics.clone()).collect();
    io::write_csv(&dir.join("metrics.csv"), &metrics)?;
    io::write_json(&dir.join("metrics.json"), &metrics)?;
    let poses: Vec<PoseRow> = cases.iter().flat_map(|c| c.poses.iter().cloned()).collect();
    io::write_csv(&dir.join("poses.csv"), &poses)?;
    let timings: Vec<TimingRow> = cases.iter().flat_map(|c| c.timings.iter().cloned()).collect();
    io::write_csv(&dir.join("timings.csv"), &timings)?;
    if let Some(first) = cases.first() {
        write_case_artifacts(dir, first)?;
    }
    for c in cases {
        let sub = dir.join("cases").join(format!("{}-v{}-s{}", c.metrics.variant, c.metrics.views, c.metrics.seed));
        write_case_artifacts(&sub, c)?;
        io::write_csv(&sub.join("poses.csv"), &c.poses)?;
    }
    Ok(())
}

fn write_case_artifacts(dir: &Path, c: &CaseOutput) -> Result<()> {
    io::write_field(&dir.join("object.ply"), &c.field)?;
    io::write_json(&dir.join("graph.json"), &io::GraphRecord::from_graph(&c.graph))?;
    io::write_costs(&dir.join("solver_costs.csv"), &c.costs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_sampling() {
        assert_eq!(reference_indices(16, 1, ViewSampling::Even), vec![0]);
        assert_eq!(reference_indices(16, 8, ViewSampling::Even), vec![0, 2, 4, 6, 8, 10, 12, 14]);
        assert_eq!(reference_indices(16, 16, ViewSampling::Even), (0..16).collect::<Vec<_>>());
        assert_eq!(reference_indices(16, 3, ViewSampling::Prefix), vec![0, 1, 2]);
    }

    #[test]
    fn toggle_labels() {
        let t = Toggles::default();
        assert_eq!(t.label(), "full");
        let all = t.with_ablations();
        let labels: Vec<String> = all.iter().map(Toggles::label).collect();
        assert_eq!(labels, ["full", "no-uncertainty", "no-ba", "no-diffusion-frames"]);
    }

    #[test]
    fn config_rejects_zero_views() {
        let cfg = RunConfig { view_counts: vec![0], ..RunConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let cfg = RunConfig { view_counts: vec![17], ..RunConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }
}
