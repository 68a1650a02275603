use splatpose::pipeline::RunConfig;
use splatpose_core::geometry::Camera;
use splatpose_core::sim::ShapeKind;

/// A scene small enough to run the whole pipeline in a few seconds.
pub fn small_config() -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.scene.shape = ShapeKind::Box;
    cfg.scene.camera = Camera::new(60.0, 60.0, 24.0, 18.0, 48, 36).unwrap();
    cfg.scene.trajectory.frames = 6;
    cfg.scene.test_views.count = 2;
    cfg.scene.object_points = 3000;
    cfg.view_counts = vec![1, 3];
    cfg.diffusion.k = 4;
    cfg.pipeline.map.iters = 5;
    cfg
}
