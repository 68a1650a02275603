use alloc::vec;
use alloc::vec::Vec;

use super::NoiseSchedule;
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Predicted noise with its diagonal predictive variance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePrediction {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl NoisePrediction {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), actual: variance.len() });
        }
        if variance.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("predictive variance must be finite and non-negative"));
        }
        Ok(Self { mean, variance })
    }
}

/// A noise predictor returning a Gaussian predictive distribution per element.
///
/// Implementations must be deterministic in `(x, t)` and callable from
/// several threads at once.
pub trait UncertainNoisePredictor {
    fn dim(&self) -> usize;

    /// Writes the predictive mean and variance for state `x` at step `t`.
    fn predict_into(&self, x: &[f64], t: usize, mean: &mut [f64], variance: &mut [f64]);

    fn predict(&self, x: &[f64], t: usize) -> NoisePrediction {
        let mut mean = vec![0.0; x.len()];
        let mut variance = vec![0.0; x.len()];
        self.predict_into(x, t, &mut mean, &mut variance);
        NoisePrediction { mean, variance }
    }
}

/// `eps = a ⊙ x + b` with independent Gaussian uncertainty on `a` and `b`,
/// giving predictive variance `var_a ⊙ x² + var_b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinePredictor {
    pub scale: Vec<f64>,
    pub offset: Vec<f64>,
    pub scale_variance: Vec<f64>,
    pub offset_variance: Vec<f64>,
}

impl AffinePredictor {
    pub fn new(scale: Vec<f64>, offset: Vec<f64>, scale_variance: Vec<f64>, offset_variance: Vec<f64>) -> Result<Self> {
        let d = scale.len();
        for v in [&offset, &scale_variance, &offset_variance] {
            if v.len() != d {
                return Err(Error::DimensionMismatch { expected: d, actual: v.len() });
            }
        }
        if scale_variance.iter().chain(&offset_variance).any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("parameter variances must be non-negative"));
        }
        Ok(Self { scale, offset, scale_variance, offset_variance })
    }

    /// `eps = c` regardless of the state.
    pub fn constant(value: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        let d = value.len();
        Self::new(vec![0.0; d], value, vec![0.0; d], variance)
    }
}

impl UncertainNoisePredictor for AffinePredictor {
    fn dim(&self) -> usize {
        self.scale.len()
    }

    fn predict_into(&self, x: &[f64], _t: usize, mean: &mut [f64], variance: &mut [f64]) {
        for i in 0..x.len() {
            mean[i] = self.scale[i] * x[i] + self.offset[i];
            variance[i] = self.scale_variance[i] * x[i] * x[i] + self.offset_variance[i];
        }
    }
}

/// Predictor that steers the deterministic sampler to a fixed target view.
///
/// Starting from `x_T = sqrt(alpha_T) target + sqrt(1 - alpha_T) noise`, the
/// predicted mean is the constant `noise`, which keeps the DDIM trajectory on
/// `sqrt(alpha_t) target + sqrt(1 - alpha_t) noise` and ends at the target.
/// The predictive variance is a fixed per-element map standing in for the
/// epistemic uncertainty of a generative model about that view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewNoisePredictor {
    noise: Vec<f64>,
    variance: Vec<f64>,
}

impl ViewNoisePredictor {
    pub fn new(noise: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        let p = NoisePrediction::new(noise, variance)?;
        Ok(Self { noise: p.mean, variance: p.variance })
    }

    /// Initial state mean for reaching `target` under `schedule`.
    pub fn start_mean(&self, target: &[f64], schedule: &NoiseSchedule) -> Vec<f64> {
        let a = schedule.alpha(schedule.steps());
        target.iter().zip(&self.noise).map(|(x0, z)| a.sqrt() * x0 + (1.0 - a).sqrt() * z).collect()
    }
}

impl UncertainNoisePredictor for ViewNoisePredictor {
    fn dim(&self) -> usize {
        self.noise.len()
    }

    fn predict_into(&self, _x: &[f64], _t: usize, mean: &mut [f64], variance: &mut [f64]) {
        mean.copy_from_slice(&self.noise);
        variance.copy_from_slice(&self.variance);
    }
}
