//! Isotropic Gaussian object fields: rendering, mapping loss and optimization.

mod field;
mod loss;
mod optimize;
mod render;
mod seed;

pub use field::{GaussianField, IsotropicGaussian};
pub use loss::{mapping_loss, mapping_loss_and_grad, GaussianGrad, LossSettings, MapFrame};
pub use optimize::{optimize_map, MapOptimizerConfig, MapReport};
pub use render::{render, render_with, RenderOutput, RenderSettings};
pub use seed::{seed_from_pointcloud, voxel_fuse, FusedCloud, SeedParams};
