use alloc::vec::Vec;

use crate::image::{check_shape, ColorImage, Grid, ScalarMap};
use crate::{Error, Result};
#[allow(unused_imports)]
use num_traits::Float;

/// Generated view with per-pixel variance.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainImage {
    /// Intensities clamped to `[0, 1]`.
    pub rgb: ColorImage,
    /// Per-pixel variance: mean of the three channel variances.
    pub variance: ScalarMap,
}

impl UncertainImage {
    /// From an interleaved RGB state vector (`3 * width * height` entries,
    /// row-major) and its per-element variance.
    pub fn from_state(width: usize, height: usize, mean: &[f64], variance: &[f64]) -> Result<Self> {
        let n = width * height * 3;
        if mean.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: mean.len() });
        }
        if variance.len() != n {
            return Err(Error::DimensionMismatch { expected: n, actual: variance.len() });
        }
        let rgb: Vec<[f64; 3]> = mean
            .chunks_exact(3)
            .map(|c| [c[0].clamp(0.0, 1.0), c[1].clamp(0.0, 1.0), c[2].clamp(0.0, 1.0)])
            .collect();
        let var: Vec<f64> = variance.chunks_exact(3).map(|c| (c[0] + c[1] + c[2]) / 3.0).collect();
        Ok(Self { rgb: Grid::from_vec(width, height, rgb)?, variance: Grid::from_vec(width, height, var)? })
    }

    pub fn width(&self) -> usize {
        self.rgb.width()
    }

    pub fn height(&self) -> usize {
        self.rgb.height()
    }
}

/// `C = min(exp(conf / max(var, var_floor)), conf_cap)` per pixel.
pub fn modulate_confidence(conf: &ScalarMap, variance: &ScalarMap, var_floor: f64, conf_cap: f64) -> Result<ScalarMap> {
    check_shape(conf, variance)?;
    if !(var_floor > 0.0) || !(conf_cap > 0.0) {
        return Err(Error::InvalidInput("variance floor and confidence cap must be positive"));
    }
    let data = conf
        .as_slice()
        .iter()
        .zip(variance.as_slice())
        .map(|(&c, &v)| (c / v.max(var_floor)).exp().min(conf_cap))
        .collect();
    Grid::from_vec(conf.width(), conf.height(), data)
}
