//! Gain-scheduled task-space compliance controller.
//!
//! The commanded joint torque is
//!
//! ```text
//! τ_res  = τ_task + τ_fr,nom + g(q)
//! τ_task = Jᵀ · w,   w = Kp·e_x + Kd·ė_x + Ki·∫e_x
//! ```
//!
//! with `e_x = desired − actual`. Once the tool is in contact the z row of
//! `w` is replaced by a force loop `f_d,z + Kf,p·e_f + Kf,d·ė_f` (base-frame
//! z, the bed normal) and the z integral is frozen.

mod calibration;
mod observer;

use alloc::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{jacobian_transpose_mul, Jacobian, Vec3, Vec6, Vec7};
use crate::TaskKind;

pub use calibration::{
    fit_digit_calibration, CalibrationError, CalibrationSample, DigitCalibration,
};
pub use observer::{FrictionObserver, ObserverParams};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("controller fault: non-finite {0}")]
    NonFinite(&'static str),
    #[error("no gain set configured for task `{0}`")]
    MissingTask(&'static str),
    #[error("invalid gains for `{task}`: {reason}")]
    InvalidGains {
        task: &'static str,
        reason: &'static str,
    },
}

/// Diagonal PID gains on the 6-D pose error plus PD gains on the force error.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSet {
    /// N/m (translation), N·m/rad (rotation)
    pub kp: [f64; 6],
    /// N·s/m, N·m·s/rad
    pub kd: [f64; 6],
    /// N/(m·s), N·m/(rad·s)
    pub ki: [f64; 6],
    /// dimensionless
    pub kf_p: [f64; 3],
    /// s
    pub kf_d: [f64; 3],
}

impl GainSet {
    pub fn validate(&self, task: TaskKind) -> Result<(), ControlError> {
        let all = self
            .kp
            .iter()
            .chain(&self.kd)
            .chain(&self.ki)
            .chain(&self.kf_p)
            .chain(&self.kf_d);
        let fail = |reason| ControlError::InvalidGains {
            task: task.name(),
            reason,
        };
        for &g in all {
            if !g.is_finite() || g < 0.0 {
                return Err(fail("gains must be finite and non-negative"));
            }
        }
        if self.kp[..3].iter().any(|&k| k <= 0.0) {
            return Err(fail("translational stiffness must be positive"));
        }
        Ok(())
    }

    pub fn stiffness_z(&self) -> f64 {
        self.kp[2]
    }

    fn stiff() -> Self {
        GainSet {
            kp: [800.0, 800.0, 600.0, 40.0, 40.0, 40.0],
            kd: [60.0, 60.0, 50.0, 3.0, 3.0, 3.0],
            ki: [100.0, 100.0, 100.0, 0.0, 0.0, 0.0],
            kf_p: [0.8; 3],
            kf_d: [0.02; 3],
        }
    }
}

/// Per-task gains. Drying must be softer along z than washing and rinsing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GainSchedule(pub BTreeMap<TaskKind, GainSet>);

impl Default for GainSchedule {
    fn default() -> Self {
        let stiff = GainSet::stiff();
        let mut soft = stiff.clone();
        soft.kp[2] = 150.0;
        soft.kd[2] = 20.0;
        let mut map = BTreeMap::new();
        map.insert(TaskKind::Wash, stiff.clone());
        map.insert(TaskKind::Rinse, stiff.clone());
        map.insert(TaskKind::Dry, soft);
        map.insert(TaskKind::FreeMotion, stiff);
        GainSchedule(map)
    }
}

impl GainSchedule {
    pub fn validate(&self) -> Result<(), ControlError> {
        for (task, g) in &self.0 {
            g.validate(*task)?;
        }
        let dry = self.get(TaskKind::Dry)?.stiffness_z();
        for task in [TaskKind::Wash, TaskKind::Rinse] {
            if dry >= self.get(task)?.stiffness_z() {
                return Err(ControlError::InvalidGains {
                    task: TaskKind::Dry.name(),
                    reason: "dry z stiffness must be below wash and rinse",
                });
            }
        }
        Ok(())
    }

    pub fn get(&self, task: TaskKind) -> Result<&GainSet, ControlError> {
        self.0
            .get(&task)
            .ok_or(ControlError::MissingTask(task.name()))
    }
}

pub fn select_gains(schedule: &GainSchedule, task: TaskKind) -> Result<&GainSet, ControlError> {
    schedule.get(task)
}

/// Tunables that are not per-task gains.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerParams {
    /// Largest wrench the integral term may contribute per axis (N, N·m).
    /// The integral is clamped to `windup_wrench / Ki`.
    pub windup_wrench: [f64; 6],
    /// cutoff of the first-order filter on error derivatives (Hz)
    pub derivative_cutoff_hz: f64,
    /// contact engages when |f_z| exceeds this (N)
    pub contact_threshold: f64,
    /// contact releases when |f_z| < threshold − hysteresis (N)
    pub contact_hysteresis: f64,
}

impl Default for ControllerParams {
    fn default() -> Self {
        ControllerParams {
            windup_wrench: [15.0, 15.0, 15.0, 3.0, 3.0, 3.0],
            derivative_cutoff_hz: 50.0,
            contact_threshold: 0.5,
            contact_hysteresis: 0.2,
        }
    }
}

/// Integrator, derivative filters and contact flag of the task-space loop.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ControllerState {
    pub integral_error: Vec6,
    prev_pose_error: Option<Vec6>,
    pose_error_rate: Vec6,
    prev_force_error: Option<Vec3>,
    force_error_rate: Vec3,
    pub in_contact: bool,
    pub measured_force: Vec3,
    /// set when the last resultant torque hit a joint limit; freezes the integral
    pub saturated: bool,
}

impl ControllerState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Forget derivative history and the integral (e.g. on a controller switch).
    pub fn reset(&mut self) {
        *self = ControllerState {
            in_contact: self.in_contact,
            measured_force: self.measured_force,
            ..Default::default()
        };
    }

    pub fn windup_limit(params: &ControllerParams, gains: &GainSet, axis: usize) -> f64 {
        if gains.ki[axis] > 0.0 {
            params.windup_wrench[axis] / gains.ki[axis]
        } else {
            0.0
        }
    }
}

fn lowpass_alpha(cutoff_hz: f64, dt: f64) -> f64 {
    if cutoff_hz <= 0.0 {
        return 1.0;
    }
    let rc = 1.0 / (2.0 * core::f64::consts::PI * cutoff_hz);
    dt / (dt + rc)
}

/// Task-space wrench command `w` before mapping through `Jᵀ`.
pub fn task_wrench(
    gains: &GainSet,
    params: &ControllerParams,
    state: &mut ControllerState,
    e_x: &Vec6,
    e_f: &Vec3,
    f_desired: &Vec3,
    dt: f64,
) -> Result<Vec6, ControlError> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ControlError::NonFinite("time step"));
    }
    if !e_x.iter().all(|v| v.is_finite()) {
        return Err(ControlError::NonFinite("pose error"));
    }
    if !e_f.iter().chain(f_desired.iter()).all(|v| v.is_finite()) {
        return Err(ControlError::NonFinite("force error"));
    }
    let alpha = lowpass_alpha(params.derivative_cutoff_hz, dt);

    if let Some(prev) = state.prev_pose_error {
        let raw = (e_x - prev) / dt;
        state.pose_error_rate += (raw - state.pose_error_rate) * alpha;
    }
    state.prev_pose_error = Some(*e_x);
    if let Some(prev) = state.prev_force_error {
        let raw = (e_f - prev) / dt;
        state.force_error_rate += (raw - state.force_error_rate) * alpha;
    }
    state.prev_force_error = Some(*e_f);

    for axis in 0..6 {
        let limit = ControllerState::windup_limit(params, gains, axis);
        let frozen = state.saturated || (axis == 2 && state.in_contact);
        if !frozen {
            state.integral_error[axis] += e_x[axis] * dt;
        }
        state.integral_error[axis] = state.integral_error[axis].clamp(-limit, limit);
    }

    let mut w = Vec6::zeros();
    for axis in 0..6 {
        w[axis] = gains.kp[axis] * e_x[axis]
            + gains.kd[axis] * state.pose_error_rate[axis]
            + gains.ki[axis] * state.integral_error[axis];
    }
    if state.in_contact {
        w[2] = f_desired.z + gains.kf_p[2] * e_f.z + gains.kf_d[2] * state.force_error_rate.z;
    }
    Ok(w)
}

/// `τ_task = Jᵀ · w` for the current errors.
///
/// `e_x` is `desired − actual` (translation; rotation as axis-angle),
/// `e_f = f_desired − f_measured`, where forces are those the tool applies to
/// the environment in the base frame (pressing down is negative z).
#[allow(clippy::too_many_arguments)]
pub fn task_torque(
    gains: &GainSet,
    params: &ControllerParams,
    state: &mut ControllerState,
    jacobian: &Jacobian,
    e_x: &Vec6,
    e_f: &Vec3,
    f_desired: &Vec3,
    dt: f64,
) -> Result<Vec7, ControlError> {
    if !jacobian.iter().all(|v| v.is_finite()) {
        return Err(ControlError::NonFinite("jacobian"));
    }
    let w = task_wrench(gains, params, state, e_x, e_f, f_desired, dt)?;
    Ok(jacobian_transpose_mul(jacobian, &w))
}

/// Sum of task, friction-compensation and gravity torques, clamped per joint.
/// The flag reports whether any joint saturated.
pub fn resultant_torque(
    tau_task: &Vec7,
    tau_fr_nom: &Vec7,
    gravity: &Vec7,
    torque_limits: &[f64; 7],
) -> (Vec7, bool) {
    let mut out = tau_task + tau_fr_nom + gravity;
    let mut saturated = false;
    for i in 0..7 {
        let lim = torque_limits[i];
        if out[i].abs() > lim {
            log::debug!("joint {i} torque {:.3} N·m saturated at {lim}", out[i]);
            out[i] = out[i].clamp(-lim, lim);
            saturated = true;
        }
    }
    (out, saturated)
}

/// One step of the hysteretic contact detector on the normal force.
pub fn contact_detector(
    was_in_contact: bool,
    measured_force: &Vec3,
    threshold: f64,
    hysteresis: f64,
) -> bool {
    let fz = measured_force.z.abs();
    if was_in_contact {
        fz >= threshold - hysteresis
    } else {
        fz > threshold
    }
}
