use splatpose_core::geometry::{Camera, RigidTransform, Vec3};
use splatpose_core::image::{ColorImage, DepthMap, Grid};
use splatpose_core::posegraph::{descriptor, DescriptorRetriever, Keyframe, KeyframeKind, PoseGraph};
use splatpose_core::sim::{generate_scene, GtView, MatcherConfig, Scene, SceneSpec, ShapeKind, SyntheticFrame, SyntheticMatcher};
use splatpose_core::splat::{render, seed_from_pointcloud, GaussianField, SeedParams};
use splatpose_core::tracking::{refine_pose, relocalize, RefineConfig, RelocalizeConfig, TrackState, TrackStatus};
use splatpose_core::Error;

fn object_field(scene: &Scene) -> GaussianField {
    seed_from_pointcloud(&scene.object.cloud().unwrap(), scene.object.colors(), &SeedParams::default()).unwrap()
}

/// Depth and colour of the field seen from `t_oc`, keeping only pixels inside the silhouette.
fn self_render(field: &GaussianField, cam: &Camera, t_oc: &RigidTransform) -> (ColorImage, DepthMap) {
    let out = render(field, cam, &t_oc.inverse());
    let depth = Grid::from_fn(cam.width, cam.height, |x, y| if *out.silhouette.get(x, y) > 0.5 { *out.depth.get(x, y) } else { 0.0 });
    (out.color, depth)
}

fn perturb(t: &RigidTransform, axis: Vec3, deg: f64, shift: Vec3) -> RigidTransform {
    RigidTransform::from_axis_angle(axis.normalize() * deg.to_radians(), shift).compose(t)
}

#[test]
fn fixed_point_of_self_render() {
    let scene = generate_scene(&SceneSpec::default(), 1);
    let field = object_field(&scene);
    let f = &scene.frames[3];
    let (color, depth) = self_render(&field, &f.camera, &f.t_oc);
    let r = refine_pose(&field, &f.camera, &color, &depth, &f.t_oc, &RefineConfig::default()).unwrap();
    assert!(r.residual < 1e-9, "residual {}", r.residual);
    assert!(r.pose.angle_to(&f.t_oc) < 1e-9 && r.pose.translation_to(&f.t_oc) < 1e-9);
}

#[test]
fn recovers_perturbed_pose_from_self_render() {
    let scene = generate_scene(&SceneSpec { shape: ShapeKind::Box, ..SceneSpec::default() }, 2);
    let field = object_field(&scene);
    let cfg = RefineConfig::default();
    for (k, f) in scene.frames.iter().enumerate().step_by(3) {
        let (color, depth) = self_render(&field, &f.camera, &f.t_oc);
        let axis = Vec3::new(1.0, -0.5 + 0.2 * k as f64, 0.3);
        let shift = Vec3::new(0.02, 0.0, 0.0);
        let shift = RigidTransform::from_axis_angle(Vec3::new(0.0, 0.0, k as f64), Vec3::zeros()).rotate(&shift);
        let init = perturb(&f.t_oc, axis, 3.0, shift);
        let r = refine_pose(&field, &f.camera, &color, &depth, &init, &cfg).unwrap();
        let rot = r.pose.angle_to(&f.t_oc).to_degrees();
        let tr = r.pose.translation_to(&f.t_oc);
        assert!(rot < 0.5 && tr < 0.003, "frame {k}: {rot} deg, {tr} m");
        assert!(r.residual <= r.residual_init);
    }
}

#[test]
fn refinement_is_idempotent_and_monotone_on_noisy_frames() {
    let scene = generate_scene(&SceneSpec::default(), 3);
    let field = object_field(&scene);
    let cfg = RefineConfig::default();
    for (k, f) in scene.frames.iter().enumerate() {
        let init = perturb(&f.t_oc, Vec3::new(0.2, 1.0, -0.4), 1.0 + k as f64 * 0.2, Vec3::new(0.004, -0.003, 0.002));
        let a = refine_pose(&field, &f.camera, &f.color, &f.depth, &init, &cfg).unwrap();
        assert!(a.residual <= a.residual_init, "frame {k}");
        let b = refine_pose(&field, &f.camera, &f.color, &f.depth, &a.pose, &cfg).unwrap();
        assert!(b.residual <= a.residual + 1e-15);
        let moved = a.pose.angle_to(&b.pose) + a.pose.translation_to(&b.pose);
        assert!(moved < cfg.convergence_tol, "frame {k}: moved {moved}");
    }
}

#[test]
fn pose_facing_away_has_no_overlap() {
    let scene = generate_scene(&SceneSpec::default(), 4);
    let field = object_field(&scene);
    let f = &scene.frames[0];
    let away = RigidTransform::from_axis_angle(Vec3::zeros(), Vec3::zeros())
        .compose(&f.t_oc)
        .compose(&RigidTransform::from_axis_angle(Vec3::new(0.0, core::f64::consts::PI, 0.0), Vec3::zeros()));
    let err = refine_pose(&field, &f.camera, &f.color, &f.depth, &away, &RefineConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InsufficientOverlap { .. }));
}

struct Mapped {
    scene: Scene,
    field: GaussianField,
    graph: PoseGraph,
    matcher: SyntheticMatcher,
}

fn gt_view(f: &SyntheticFrame, object: u32) -> GtView {
    GtView { camera: f.camera, t_oc: f.t_oc, depth: f.clean_depth.clone(), object, generated: false }
}

fn keyframe(f: &SyntheticFrame, tag: usize, pose: RigidTransform) -> Keyframe {
    let cam = f.camera;
    let pointmap = Grid::from_fn(cam.width, cam.height, |x, y| cam.unproject(x as f64, y as f64, f.depth.get(x, y).max(0.0)));
    let valid = f.depth.map(|d| *d > 0.0);
    let conf = Grid::filled(cam.width, cam.height, 1.0);
    Keyframe::new(KeyframeKind::Real, pose, pointmap, valid, conf, descriptor(&f.color), tag).unwrap()
}

fn mapped_scene(seed: u64) -> Mapped {
    let scene = generate_scene(&SceneSpec::default(), seed);
    let field = object_field(&scene);
    let mut graph = PoseGraph::new();
    let mut matcher = SyntheticMatcher::new(MatcherConfig { seed, ..MatcherConfig::default() });
    for f in scene.frames.iter().take(15).step_by(2) {
        let tag = matcher.register(gt_view(f, 0));
        graph.add_keyframe(keyframe(f, tag, f.t_oc));
    }
    Mapped { scene, field, graph, matcher }
}

#[test]
fn duplicate_keyframe_view_is_relocalized_exactly() {
    let m = mapped_scene(5);
    let f = &m.scene.frames[4];
    let query = keyframe(f, 2, RigidTransform::identity());
    let mut state = TrackState::new(RigidTransform::identity(), 5);
    state.status = TrackStatus::Lost;
    let cfg = RelocalizeConfig::default();
    let r = relocalize(&mut state, &m.graph, &m.field, &query, &f.camera, &f.depth, &DescriptorRetriever::L2, &m.matcher, &cfg)
        .unwrap();
    assert_eq!(r.candidate, 2);
    assert!(r.pose.angle_to(&f.t_oc) < 1e-6 && r.pose.translation_to(&f.t_oc) < 1e-6);
    assert_eq!(state.status, TrackStatus::Tracking);
    assert_eq!(state.pose, r.pose);
}

#[test]
fn kidnapped_view_between_keyframes_is_recovered() {
    let mut m = mapped_scene(6);
    let f = m.scene.frames[5].clone();
    let tag = m.matcher.register(gt_view(&f, 0));
    let query = keyframe(&f, tag, RigidTransform::identity());
    let mut state = TrackState::new(RigidTransform::from_translation(Vec3::new(1.0, 0.0, 0.0)), 5);
    state.status = TrackStatus::Lost;
    let r = relocalize(&mut state, &m.graph, &m.field, &query, &f.camera, &f.depth, &DescriptorRetriever::L2, &m.matcher, &RelocalizeConfig::default())
        .unwrap();
    assert!(r.pose.angle_to(&f.t_oc).to_degrees() < 1.0 && r.pose.translation_to(&f.t_oc) < 0.01);
}

#[test]
fn view_of_another_object_fails() {
    let mut m = mapped_scene(7);
    let other = generate_scene(&SceneSpec { shape: ShapeKind::Box, ..SceneSpec::default() }, 8);
    let f = &other.frames[4];
    let tag = m.matcher.register(gt_view(f, 1));
    let query = keyframe(f, tag, RigidTransform::identity());
    let mut state = TrackState::new(RigidTransform::identity(), 5);
    state.status = TrackStatus::Lost;
    let err = relocalize(&mut state, &m.graph, &m.field, &query, &f.camera, &f.depth, &DescriptorRetriever::L2, &m.matcher, &RelocalizeConfig::default())
        .unwrap_err();
    assert!(matches!(err, Error::RelocalizationFailed));
    assert_eq!(state.status, TrackStatus::Lost);
}
