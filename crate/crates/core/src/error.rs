use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point has non-positive depth {0} in the camera frame")]
    NonPositiveDepth(f64),
    #[error("point cloud is degenerate (covariance rank < 3 or fewer than 4 points)")]
    DegenerateCloud,
    #[error("no correspondences within {radius} m")]
    NoCorrespondences { radius: f64 },
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
    #[error("noise schedule out of domain at step {step}: 1 - alpha_prev - sigma^2 = {value}")]
    ScheduleDomain { step: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("normal equations are not positive definite at maximum damping")]
    SingularSystem,
    #[error("pose graph node {0} is not connected to any fixed node")]
    DisconnectedGraph(usize),
    #[error("silhouette overlap {overlap:.3} below required {required:.3}")]
    InsufficientOverlap { overlap: f64, required: f64 },
    #[error("frames share no covisible surface")]
    NoCovisibility,
    #[error("relocalization failed: no candidate produced an accepted pose")]
    RelocalizationFailed,
}
