//! Synthetic scenes, generative-prior and matcher stand-ins, and evaluation metrics.

mod matcher;
mod metrics;
mod prior;
mod scene;
mod shapes;

pub use matcher::{covisible_pixels, synth_matcher, GtView, MatcherConfig, SyntheticMatcher};
pub use metrics::{
    add, add_auc, add_s, auc, chamfer, chamfer_accelerated, chamfer_brute_force, model_points, psnr, MetricsReport, ADD_POINTS,
    AUC_BINS, AUC_THRESHOLD, BRUTE_FORCE_LIMIT,
};
pub use prior::{propagation_gain, synth_diffusion_prior, DiffusionPrior, PriorConfig, PriorView};
pub use scene::{capture, generate_scene, look_at_origin, render_clean, NoiseSpec, Scene, SceneSpec, SyntheticFrame, TestViews, Trajectory};
pub use shapes::{albedo, Primitive, ShapeKind, SyntheticObject};
