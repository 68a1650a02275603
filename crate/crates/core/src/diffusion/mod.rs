//! Deterministic DDIM sampling with per-element variance propagation.
//!
//! The sampler carries a mean and a diagonal variance for the state. At each
//! step the noise predictor supplies a mean and a predictive variance; the
//! cross-covariance between state and predicted noise is estimated by Monte
//! Carlo over samples drawn around the current state. Since one DDIM step is
//! the linear map `x_{t-1} = A x_t + B eps_t`, the variance update is
//! `A² Var(x_t) + 2AB Cov(x_t, eps_t) + B² Var(eps_t)`.

mod confidence;
mod predictor;
mod sampler;
mod schedule;

pub use confidence::{modulate_confidence, UncertainImage};
pub use predictor::{AffinePredictor, NoisePrediction, UncertainNoisePredictor, ViewNoisePredictor};
pub use sampler::{
    ddim_step, draw_sample, mc_covariance, mc_moments, propagate_variance, sample_chain,
    sample_with_uncertainty, ChainOutput, LatentState, McMoments, SamplerConfig, VarianceUpdate,
};
pub use schedule::{NoiseSchedule, StepCoefficients};
