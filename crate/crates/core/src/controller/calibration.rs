//! Linear force calibration for the visuo-tactile sensor: optical-flow
//! features are regressed onto reference force readings.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};
use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const RIDGE: f64 = 1e-9;
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CalibrationError {
    #[error("need at least {needed} samples for {features} features, got {got}")]
    TooFewSamples {
        needed: usize,
        features: usize,
        got: usize,
    },
    #[error("need at least 3 features per sample, got {0}")]
    TooFewFeatures(usize),
    #[error("sample {0} has a different feature count")]
    RaggedSample(usize),
    #[error("feature matrix is rank deficient (rank {rank} < {needed})")]
    RankDeficient { rank: usize, needed: usize },
    #[error("non-finite value in sample {0}")]
    NonFinite(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct CalibrationSample {
    pub features: Vec<f64>,
    pub force: [f64; 3],
}

/// `force = A · features + b`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DigitCalibration {
    /// 3 rows of `k` coefficients (N per feature unit)
    pub matrix: [Vec<f64>; 3],
    pub bias: [f64; 3],
    pub residual_rms: f64,
    pub samples: usize,
}

impl DigitCalibration {
    pub fn feature_count(&self) -> usize {
        self.matrix[0].len()
    }

    pub fn predict(&self, features: &[f64]) -> [f64; 3] {
        core::array::from_fn(|axis| {
            self.bias[axis]
                + self.matrix[axis]
                    .iter()
                    .zip(features)
                    .map(|(a, x)| a * x)
                    .sum::<f64>()
        })
    }
}

/// Ordinary least squares per force axis through the (ridge-stabilised)
/// normal equations.
pub fn fit_digit_calibration(
    samples: &[CalibrationSample],
) -> Result<DigitCalibration, CalibrationError> {
    let k = samples.first().map_or(0, |s| s.features.len());
    if k < 3 {
        return Err(CalibrationError::TooFewFeatures(k));
    }
    let n = samples.len();
    if n < k + 1 {
        return Err(CalibrationError::TooFewSamples {
            needed: k + 1,
            features: k,
            got: n,
        });
    }
    for (i, s) in samples.iter().enumerate() {
        if s.features.len() != k {
            return Err(CalibrationError::RaggedSample(i));
        }
        if !s.features.iter().chain(&s.force).all(|v| v.is_finite()) {
            return Err(CalibrationError::NonFinite(i));
        }
    }

    let cols = k + 1;
    let x = DMatrix::from_fn(
        n,
        cols,
        |r, c| if c < k { samples[r].features[c] } else { 1.0 },
    );
    let sv = x.clone().singular_values();
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > RANK_TOLERANCE * smax).count();
    if rank < cols {
        return Err(CalibrationError::RankDeficient { rank, needed: cols });
    }

    let mut normal = x.tr_mul(&x);
    for i in 0..cols {
        normal[(i, i)] += RIDGE;
    }
    let chol = normal
        .cholesky()
        .ok_or(CalibrationError::RankDeficient { rank, needed: cols })?;

    let mut matrix: [Vec<f64>; 3] = Default::default();
    let mut bias = [0.0; 3];
    let mut sq = 0.0;
    for axis in 0..3 {
        let y = DVector::from_fn(n, |r, _| samples[r].force[axis]);
        let beta = chol.solve(&x.tr_mul(&y));
        let resid = &x * &beta - &y;
        sq += resid.norm_squared();
        matrix[axis] = beta.iter().take(k).copied().collect();
        bias[axis] = beta[k];
    }
    Ok(DigitCalibration {
        matrix,
        bias,
        residual_rms: Float::sqrt(sq / (3 * n) as f64),
        samples: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;
    use alloc::vec;

    pub(crate) fn synthetic(
        n: usize,
        k: usize,
        noise: f64,
        seed: u64,
    ) -> (Vec<CalibrationSample>, [Vec<f64>; 3], [f64; 3]) {
        let mut rng = XorShift64Star::new(seed);
        let a: [Vec<f64>; 3] =
            core::array::from_fn(|_| (0..k).map(|_| rng.uniform(-2.0, 2.0)).collect());
        let b = [
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
            rng.uniform(-1.0, 1.0),
        ];
        let samples = (0..n)
            .map(|_| {
                let features: Vec<f64> = (0..k).map(|_| rng.uniform(-3.0, 3.0)).collect();
                let force = core::array::from_fn(|axis| {
                    b[axis]
                        + a[axis]
                            .iter()
                            .zip(&features)
                            .map(|(p, q)| p * q)
                            .sum::<f64>()
                        + rng.gaussian(0.0, noise)
                });
                CalibrationSample { features, force }
            })
            .collect();
        (samples, a, b)
    }

    #[test]
    fn exact_recovery() {
        let (samples, a, b) = synthetic(40, 6, 0.0, 1);
        let cal = fit_digit_calibration(&samples).unwrap();
        for axis in 0..3 {
            for (x, y) in cal.matrix[axis].iter().zip(&a[axis]) {
                assert!((x - y).abs() < 1e-8);
            }
            assert!((cal.bias[axis] - b[axis]).abs() < 1e-8);
        }
        assert!(cal.residual_rms < 1e-8);
    }

    #[test]
    fn noisy_residual_matches_sigma() {
        let (samples, _, _) = synthetic(500, 6, 0.05, 2);
        let cal = fit_digit_calibration(&samples).unwrap();
        assert!(
            (0.04..=0.06).contains(&cal.residual_rms),
            "{}",
            cal.residual_rms
        );
    }

    #[test]
    fn underdetermined_is_rejected() {
        let (samples, _, _) = synthetic(2, 3, 0.0, 3);
        assert!(matches!(
            fit_digit_calibration(&samples),
            Err(CalibrationError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn collinear_features_are_rank_deficient() {
        let samples: Vec<_> = (0..10)
            .map(|i| {
                let t = i as f64;
                CalibrationSample {
                    features: vec![t, 2.0 * t, 1.0],
                    force: [t, 0.0, 0.0],
                }
            })
            .collect();
        assert!(matches!(
            fit_digit_calibration(&samples),
            Err(CalibrationError::RankDeficient { .. })
        ));
    }
}
