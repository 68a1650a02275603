use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Cumulative signal levels `alphas[t]` for `t = 0..=T` and per-step noise
/// scales `sigmas[t]` (entry 0 unused). Sampling runs from `t = T` down to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule")]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
    sigmas: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSchedule {
    alphas: Vec<f64>,
    sigmas: Vec<f64>,
}

impl TryFrom<RawSchedule> for NoiseSchedule {
    type Error = Error;
    fn try_from(raw: RawSchedule) -> Result<Self> {
        Self::new(raw.alphas, raw.sigmas)
    }
}

impl NoiseSchedule {
    pub fn new(alphas: Vec<f64>, sigmas: Vec<f64>) -> Result<Self> {
        if alphas.len() < 2 {
            return Err(Error::InvalidInput("schedule needs at least one step"));
        }
        if sigmas.len() != alphas.len() {
            return Err(Error::DimensionMismatch { expected: alphas.len(), actual: sigmas.len() });
        }
        if alphas.iter().any(|&a| !(a > 0.0 && a <= 1.0)) {
            return Err(Error::InvalidInput("alphas must lie in (0, 1]"));
        }
        if alphas.windows(2).any(|w| !(w[1] < w[0])) {
            return Err(Error::InvalidInput("alphas must strictly decrease with t"));
        }
        if sigmas.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidInput("sigmas must be non-negative"));
        }
        let s = Self { alphas, sigmas };
        for t in 1..s.alphas.len() {
            s.coefficients(t)?;
        }
        Ok(s)
    }

    /// Linear-beta training schedule (1e-4 to 0.02 over 1000 steps) sampled at
    /// `steps` evenly spaced timesteps, with the final signal level set to 1.
    /// `eta = 0` gives the deterministic sampler.
    pub fn ddim(steps: usize, eta: f64) -> Result<Self> {
        const TRAIN: usize = 1000;
        if steps == 0 || steps > TRAIN {
            return Err(Error::InvalidInput("step count must be in 1..=1000"));
        }
        let mut cum = Vec::with_capacity(TRAIN);
        let mut acc = 1.0;
        for i in 0..TRAIN {
            let beta = 1e-4 + (0.02 - 1e-4) * i as f64 / (TRAIN - 1) as f64;
            acc *= 1.0 - beta;
            cum.push(acc);
        }
        let stride = TRAIN / steps;
        let mut alphas = Vec::with_capacity(steps + 1);
        alphas.push(1.0);
        for k in 0..steps {
            alphas.push(cum[k * stride]);
        }
        let mut sigmas = Vec::with_capacity(steps + 1);
        sigmas.push(0.0);
        for t in 1..=steps {
            let (a, ap) = (alphas[t], alphas[t - 1]);
            sigmas.push(eta * ((1.0 - ap) / (1.0 - a)).sqrt() * (1.0 - a / ap).sqrt());
        }
        Self::new(alphas, sigmas)
    }

    /// Number of sampling steps `T`.
    pub fn steps(&self) -> usize {
        self.alphas.len() - 1
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    pub fn sigma(&self, t: usize) -> f64 {
        self.sigmas[t]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.sigmas
    }

    /// Coefficients of the step from `t` to `t - 1`.
    pub fn coefficients(&self, t: usize) -> Result<StepCoefficients> {
        if t == 0 || t > self.steps() {
            return Err(Error::InvalidInput("step index out of range"));
        }
        StepCoefficients::new(t, self.alphas[t - 1], self.alphas[t], self.sigmas[t])
    }
}

/// `alpha_{t-1}`, `alpha_t`, `sigma_t` of one DDIM step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepCoefficients {
    pub alpha_prev: f64,
    pub alpha: f64,
    pub sigma: f64,
    direction: f64,
}

impl StepCoefficients {
    pub fn new(step: usize, alpha_prev: f64, alpha: f64, sigma: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0 && alpha_prev > 0.0 && alpha_prev <= 1.0) {
            return Err(Error::InvalidInput("alphas must lie in (0, 1]"));
        }
        let arg = 1.0 - alpha_prev - sigma * sigma;
        if !(arg >= 0.0) {
            return Err(Error::ScheduleDomain { step, value: arg });
        }
        Ok(Self { alpha_prev, alpha, sigma, direction: arg.sqrt() })
    }

    /// `sqrt(alpha_{t-1}) (x - sqrt(1 - alpha_t) eps) / sqrt(alpha_t) + sqrt(1 - alpha_{t-1} - sigma²) eps`
    #[inline]
    pub fn step(&self, x: f64, eps: f64) -> f64 {
        self.alpha_prev.sqrt() * ((x - (1.0 - self.alpha).sqrt() * eps) / self.alpha.sqrt()) + self.direction * eps
    }

    /// Gain `A` on the state.
    #[inline]
    pub fn state_gain(&self) -> f64 {
        (self.alpha_prev / self.alpha).sqrt()
    }

    /// Gain `B` on the predicted noise.
    #[inline]
    pub fn noise_gain(&self) -> f64 {
        self.direction - (self.alpha_prev * (1.0 - self.alpha) / self.alpha).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn ddim_schedule_is_valid() {
        for steps in [1, 10, 50, 1000] {
            let s = NoiseSchedule::ddim(steps, 0.0).unwrap();
            assert_eq!(s.steps(), steps);
            assert_eq!(s.alpha(0), 1.0);
        }
        let s = NoiseSchedule::ddim(50, 1.0).unwrap();
        assert_eq!(s.sigma(1), 0.0);
        assert!(s.sigmas()[2..].iter().all(|&v| v > 0.0));
    }

    #[test]
    fn rejects_invalid_schedules() {
        assert!(NoiseSchedule::new(vec![1.0, 1.0], vec![0.0, 0.0]).is_err());
        assert!(NoiseSchedule::new(vec![0.5, 0.8], vec![0.0, 0.0]).is_err());
        assert!(matches!(
            NoiseSchedule::new(vec![0.9, 0.5], vec![0.0, 0.5]),
            Err(Error::ScheduleDomain { step: 1, .. })
        ));
    }

    #[test]
    fn gains_reproduce_step() {
        let c = StepCoefficients::new(3, 0.8, 0.5, 0.1).unwrap();
        let (x, e) = (0.7, -1.3);
        assert!((c.step(x, e) - (c.state_gain() * x + c.noise_gain() * e)).abs() < 1e-14);
    }
}
