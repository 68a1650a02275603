use alloc::vec;
use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{NoisePrediction, NoiseSchedule, UncertainImage, UncertainNoisePredictor};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Sampler state: mean and diagonal variance at step `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub t: usize,
}

impl LatentState {
    pub fn new(mean: Vec<f64>, variance: Vec<f64>, t: usize) -> Result<Self> {
        if mean.len() != variance.len() {
            return Err(Error::DimensionMismatch { expected: mean.len(), actual: variance.len() });
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("state mean must be finite"));
        }
        if variance.iter().any(|&v| !(v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput("state variance must be finite and non-negative"));
        }
        Ok(Self { mean, variance, t })
    }

    /// Zero-variance state.
    pub fn certain(mean: Vec<f64>, t: usize) -> Result<Self> {
        let d = mean.len();
        Self::new(mean, vec![0.0; d], t)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    /// Monte Carlo samples per step for the cross-covariance.
    pub samples: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { samples: 20, seed: 0 }
    }
}

/// Mean of `x_{t-1}` given the predicted noise mean.
pub fn ddim_step(state: &LatentState, eps: &NoisePrediction, schedule: &NoiseSchedule) -> Result<Vec<f64>> {
    if state.t == 0 {
        return Err(Error::InvalidInput("cannot step below t = 0"));
    }
    check_dim(state.dim(), eps.mean.len())?;
    let c = schedule.coefficients(state.t)?;
    Ok(state.mean.iter().zip(&eps.mean).map(|(&x, &e)| c.step(x, e)).collect())
}

/// Monte Carlo moments of the predictor around the current state.
#[derive(Debug, Clone, PartialEq)]
pub struct McMoments {
    /// `Cov(x_t, eps_theta(x_t))` per element.
    pub covariance: Vec<f64>,
    /// Empirical variance of the predicted noise mean across samples.
    pub mean_spread: Vec<f64>,
    /// Average predictive variance across samples.
    pub predictive_variance: Vec<f64>,
}

fn step_seed(seed: u64, t: usize) -> u64 {
    seed ^ (t as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Draws `samples` states elementwise from `N(mean, variance)` and returns
///
/// `(1/S) Σ x_i ⊙ eps(x_i) - x̄ ⊙ (1/S) Σ eps(x_i)`
///
/// with `x̄` the empirical mean of the draws. Sums run in sample order over
/// values shifted by the first draw, which leaves the estimate unchanged and
/// makes it exactly zero when either factor is constant across draws.
pub fn mc_moments<P: UncertainNoisePredictor + ?Sized>(
    state: &LatentState,
    predictor: &P,
    samples: usize,
    seed: u64,
) -> Result<McMoments> {
    if samples < 2 {
        return Err(Error::InvalidInput("need at least two Monte Carlo samples"));
    }
    let d = state.dim();
    check_dim(predictor.dim(), d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std: Vec<f64> = state.variance.iter().map(|v| v.sqrt()).collect();
    let mut x = vec![0.0; d];
    let mut eps = vec![0.0; d];
    let mut var = vec![0.0; d];
    let (mut x_ref, mut e_ref) = (vec![0.0; d], vec![0.0; d]);
    let (mut sx, mut se, mut sxe, mut see, mut sv) = (vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d], vec![0.0; d]);
    for i in 0..samples {
        for k in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[k] = state.mean[k] + std[k] * z;
        }
        predictor.predict_into(&x, state.t, &mut eps, &mut var);
        if i == 0 {
            x_ref.copy_from_slice(&x);
            e_ref.copy_from_slice(&eps);
        }
        for k in 0..d {
            let dx = x[k] - x_ref[k];
            let de = eps[k] - e_ref[k];
            sx[k] += dx;
            se[k] += de;
            sxe[k] += dx * de;
            see[k] += de * de;
            sv[k] += var[k];
        }
    }
    let s = samples as f64;
    let covariance = (0..d).map(|k| sxe[k] / s - (sx[k] / s) * (se[k] / s)).collect();
    let mean_spread = (0..d).map(|k| (see[k] / s - (se[k] / s) * (se[k] / s)).max(0.0)).collect();
    let predictive_variance = sv.iter().map(|v| v / s).collect();
    Ok(McMoments { covariance, mean_spread, predictive_variance })
}

/// Monte Carlo estimate of `Cov(x_t, eps_theta(x_t))`; see [`mc_moments`].
pub fn mc_covariance<P: UncertainNoisePredictor + ?Sized>(
    state: &LatentState,
    predictor: &P,
    samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    Ok(mc_moments(state, predictor, samples, seed)?.covariance)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceUpdate {
    pub variance: Vec<f64>,
    /// Elements whose update came out negative and were clamped to zero.
    pub clamped: usize,
}

/// `Var(x_{t-1}) = A² Var(x_t) + 2AB Cov(x_t, eps_t) + B² Var(eps_t)` with
/// `A = sqrt(alpha_{t-1} / alpha_t)` and
/// `B = sqrt(1 - alpha_{t-1} - sigma_t²) - sqrt(alpha_{t-1}) sqrt(1 - alpha_t) / sqrt(alpha_t)`,
/// the gains of the DDIM step on state and noise.
pub fn propagate_variance(
    state: &LatentState,
    eps: &NoisePrediction,
    covariance: &[f64],
    schedule: &NoiseSchedule,
) -> Result<VarianceUpdate> {
    check_dim(state.dim(), eps.variance.len())?;
    check_dim(state.dim(), covariance.len())?;
    let c = schedule.coefficients(state.t)?;
    let (a, b) = (c.state_gain(), c.noise_gain());
    let mut clamped = 0;
    let variance = (0..state.dim())
        .map(|k| {
            let v = a * a * state.variance[k] + 2.0 * a * b * covariance[k] + b * b * eps.variance[k];
            if v < 0.0 {
                clamped += 1;
                0.0
            } else {
                v
            }
        })
        .collect();
    Ok(VarianceUpdate { variance, clamped })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Total clamped elements over all steps.
    pub clamped: usize,
    /// `(mean, variance)` after each step, first entry is the input state.
    pub trajectory: Vec<(Vec<f64>, Vec<f64>)>,
}

/// Runs `T` steps of predict → Monte Carlo moments → DDIM step → variance
/// update. The noise variance entering the update is the total predictive
/// variance over the sampled states: mean predictive variance plus the spread
/// of the predicted mean.
pub fn sample_chain<P: UncertainNoisePredictor + ?Sized>(
    x_t: &LatentState,
    predictor: &P,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
) -> Result<ChainOutput> {
    if x_t.t != schedule.steps() {
        return Err(Error::InvalidInput("initial state must be at t = T"));
    }
    let mut state = x_t.clone();
    let mut clamped = 0;
    let mut trajectory = vec![(state.mean.clone(), state.variance.clone())];
    while state.t > 0 {
        let pred = predictor.predict(&state.mean, state.t);
        let moments = mc_moments(&state, predictor, config.samples, step_seed(config.seed, state.t))?;
        let total: Vec<f64> =
            moments.predictive_variance.iter().zip(&moments.mean_spread).map(|(v, s)| v + s).collect();
        let mean = ddim_step(&state, &pred, schedule)?;
        let eps = NoisePrediction { mean: pred.mean, variance: total };
        let update = propagate_variance(&state, &eps, &moments.covariance, schedule)?;
        clamped += update.clamped;
        state = LatentState { mean, variance: update.variance, t: state.t - 1 };
        trajectory.push((state.mean.clone(), state.variance.clone()));
    }
    Ok(ChainOutput { mean: state.mean, variance: state.variance, clamped, trajectory })
}

/// [`sample_chain`] reshaped into a `width x height` RGB image (row-major,
/// three interleaved channels).
pub fn sample_with_uncertainty<P: UncertainNoisePredictor + ?Sized>(
    x_t: &LatentState,
    predictor: &P,
    schedule: &NoiseSchedule,
    config: &SamplerConfig,
    width: usize,
    height: usize,
) -> Result<UncertainImage> {
    let out = sample_chain(x_t, predictor, schedule, config)?;
    UncertainImage::from_state(width, height, &out.mean, &out.variance)
}

/// One stochastic run of the sampler: at every step the noise is drawn from
/// the predictive distribution before the DDIM update. The initial state is
/// drawn from `N(mean, variance)`.
pub fn draw_sample<P: UncertainNoisePredictor + ?Sized>(
    x_t: &LatentState,
    predictor: &P,
    schedule: &NoiseSchedule,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = x_t.dim();
    check_dim(predictor.dim(), d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x: Vec<f64> = x_t
        .mean
        .iter()
        .zip(&x_t.variance)
        .map(|(m, v)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            m + v.sqrt() * z
        })
        .collect();
    let (mut eps, mut var) = (vec![0.0; d], vec![0.0; d]);
    for t in (1..=x_t.t).rev() {
        let c = schedule.coefficients(t)?;
        predictor.predict_into(&x, t, &mut eps, &mut var);
        for k in 0..d {
            let z: f64 = StandardNormal.sample(&mut rng);
            x[k] = c.step(x[k], eps[k] + var[k].sqrt() * z);
        }
    }
    Ok(x)
}

fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
