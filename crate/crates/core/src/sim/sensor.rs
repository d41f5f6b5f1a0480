use alloc::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::rng::XorShift64Star;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForceSensorModel {
    /// per-axis white noise σ (N)
    pub noise_sigma: f64,
    /// bias growth per second on every axis (N/s)
    pub bias_drift: f64,
    /// delay in control ticks
    pub latency: usize,
}

impl Default for ForceSensorModel {
    fn default() -> Self {
        ForceSensorModel {
            noise_sigma: 0.1,
            bias_drift: 0.0,
            latency: 2,
        }
    }
}

/// A running sensor: delay line, noise stream and drifting bias.
#[derive(Clone, Debug)]
pub struct ForceSensor {
    model: ForceSensorModel,
    line: VecDeque<Vec3>,
    rng: XorShift64Star,
}

impl ForceSensor {
    pub fn new(model: ForceSensorModel, seed: u64) -> Self {
        let mut line = VecDeque::with_capacity(model.latency + 1);
        line.extend(core::iter::repeat_n(Vec3::zeros(), model.latency));
        ForceSensor {
            model,
            line,
            rng: XorShift64Star::new(seed),
        }
    }

    /// Reading at control tick `tick` (period `dt`) given the true force now.
    pub fn measure(&mut self, true_force: &Vec3, tick: u64, dt: f64) -> Vec3 {
        self.line.push_back(*true_force);
        let delayed = self.line.pop_front().unwrap_or(*true_force);
        let bias = self.model.bias_drift * tick as f64 * dt;
        let sigma = self.model.noise_sigma;
        let noise = if sigma > 0.0 {
            Vec3::new(
                self.rng.gaussian(0.0, sigma),
                self.rng.gaussian(0.0, sigma),
                self.rng.gaussian(0.0, sigma),
            )
        } else {
            Vec3::zeros()
        };
        delayed + noise + Vec3::from_element(bias)
    }
}

/// Stateless form: one sample from a fresh sensor fed `history` (oldest
/// first), returning the reading at the last tick.
pub fn measure_force(
    model: &ForceSensorModel,
    history: &[Vec3],
    tick: u64,
    dt: f64,
    seed: u64,
) -> Vec3 {
    let mut s = ForceSensor::new(model.clone(), seed);
    let mut out = Vec3::zeros();
    let first = tick + 1 - history.len().min(tick as usize + 1) as u64;
    for (k, f) in history.iter().enumerate() {
        out = s.measure(f, first + k as u64, dt);
    }
    out
}
