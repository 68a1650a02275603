//! Transforms, cameras, point clouds and rigid registration.

mod camera;
mod cloud;
mod nn;
mod registration;
mod transform;

pub use camera::Camera;
pub use cloud::PointCloud;
pub use nn::NearestIndex;
pub use registration::{
    align_generated_to_real, icp_refine, kabsch, pca_scale, AlignParams, Alignment, IcpParams,
    IcpResult,
};
pub use transform::{compose, RigidTransform, SimTransform};

pub type Vec3 = nalgebra::Vector3<f64>;
pub type Mat3 = nalgebra::Matrix3<f64>;
