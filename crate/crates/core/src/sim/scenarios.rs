//! Small closed-loop experiments on the controller: force regulation on a
//! flat pad, joint stiction with and without the friction observer, and the
//! impact peak of each gain set.

use alloc::vec::Vec;

use super::trial::{Plant, TrialError};
use crate::config::ScenarioConfig;
use crate::controller::{FrictionObserver, ObserverParams};
use crate::geometry::{rot_x, Pose6, Vec3, Vec7};
use crate::planner::{PhaseTag, TrajectoryPoint};
use crate::robot::{step_dynamics, DynamicsParams, JointState, RobotModel, JOINTS};
use crate::tool::Plane;
use crate::TaskKind;

/// Force history of a pad pressed onto the plane `z = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PressTrace {
    pub dt: f64,
    pub desired: f64,
    /// normal force the sensor reports (N)
    pub measured: Vec<f64>,
    /// normal force actually applied (N)
    pub applied: Vec<f64>,
}

impl PressTrace {
    pub fn peak(&self) -> f64 {
        self.applied.iter().copied().fold(0.0, f64::max)
    }

    /// Moving average of the measured force over `window` ticks, ending at
    /// each tick.
    pub fn smoothed(&self, window: usize) -> Vec<f64> {
        let w = window.max(1);
        let mut out = Vec::with_capacity(self.measured.len());
        let mut sum = 0.0;
        for (i, &f) in self.measured.iter().enumerate() {
            sum += f;
            if i >= w {
                sum -= self.measured[i - w];
            }
            out.push(sum / (i + 1).min(w) as f64);
        }
        out
    }

    /// Earliest time after which the smoothed force error stays below
    /// `tolerance` to the end of the trace.
    pub fn settling_time(&self, tolerance: f64, window: usize) -> Option<f64> {
        let s = self.smoothed(window);
        let last_bad = s
            .iter()
            .rposition(|f| (f - self.desired).abs() >= tolerance);
        match last_bad {
            None => Some(0.0),
            Some(i) if i + 1 < s.len() => Some((i + 1) as f64 * self.dt),
            Some(_) => None,
        }
    }
}

fn face_down(z: f64) -> Pose6 {
    Pose6 {
        position: Vec3::new(0.5, 0.0, z),
        orientation: rot_x(core::f64::consts::PI),
    }
}

/// Starts the tool mount at `start_height` above the plane and tracks a
/// constant reference at `target_height` with force `force` under `task`'s
/// gains for `duration` seconds.
pub fn press_on_plane(
    cfg: &ScenarioConfig,
    task: TaskKind,
    start_height: f64,
    target_height: f64,
    force: f64,
    duration: f64,
) -> Result<PressTrace, TrialError> {
    let mut cfg = cfg.clone();
    cfg.robot.home = face_down(start_height).into();
    let mut plant = Plant::new(&cfg)?;
    let plane = Plane::horizontal(0.0);
    let point = TrajectoryPoint {
        t: 0.0,
        pose: face_down(target_height),
        force: Vec3::new(0.0, 0.0, -force),
        phase: PhaseTag::Stroke,
    };
    let ticks = libm::round(duration / cfg.timing.dt) as usize;
    let mut trace = PressTrace {
        dt: cfg.timing.dt,
        desired: force,
        measured: Vec::with_capacity(ticks),
        applied: Vec::with_capacity(ticks),
    };
    for _ in 0..ticks {
        let (r, _) = plant.step(task, 0, &point, &plane)?;
        trace.measured.push(-r.force_measured.z);
        trace.applied.push(-r.force_true.z);
    }
    Ok(trace)
}

/// Force step: the pad rests on the plane unloaded and the reference jumps
/// to `force` at the matching spring standoff.
pub fn force_step(
    cfg: &ScenarioConfig,
    task: TaskKind,
    force: f64,
    duration: f64,
) -> Result<PressTrace, TrialError> {
    let rest = cfg.tool.rest_length;
    let standoff = rest - force / cfg.tool.total_stiffness();
    press_on_plane(cfg, task, rest, standoff, force, duration)
}

/// Impact test shared by all gain sets: from 2 cm above first touch toward
/// a point 1 cm inside the surface, with a 3 N force reference.
pub fn impact_peak(cfg: &ScenarioConfig, task: TaskKind) -> Result<f64, TrialError> {
    let rest = cfg.tool.rest_length;
    Ok(press_on_plane(cfg, task, rest + 0.02, rest - 0.01, 3.0, 2.0)?.peak())
}

/// Single stuck joint under a joint-space PD loop.
#[derive(Clone, Debug, PartialEq)]
pub struct StictionScenario {
    pub joint: usize,
    pub step: f64,
    pub kp: f64,
    pub kd: f64,
    pub inertia: f64,
    pub coulomb: f64,
    pub stiction: f64,
    pub viscous: f64,
    pub duration: f64,
    /// trailing window the steady-state error is averaged over (s)
    pub window: f64,
    pub dt: f64,
    pub observer: ObserverParams,
}

impl Default for StictionScenario {
    fn default() -> Self {
        StictionScenario {
            joint: 3,
            step: 0.3,
            kp: 10.0,
            kd: 2.0,
            inertia: 0.3,
            coulomb: 0.4,
            stiction: 0.64,
            viscous: 0.3,
            duration: 6.0,
            window: 1.0,
            dt: 1e-3,
            observer: ObserverParams::default(),
        }
    }
}

impl StictionScenario {
    /// Mean absolute position error over the trailing window (rad).
    pub fn steady_state_error(&self, observer_on: bool) -> Result<f64, TrialError> {
        let mut dynamics = DynamicsParams::default().without_gravity();
        let j = self.joint;
        dynamics.inertia[j] = self.inertia;
        dynamics.coulomb[j] = self.coulomb;
        dynamics.stiction[j] = self.stiction;
        dynamics.viscous[j] = self.viscous;
        let model = RobotModel {
            dynamics,
            ..Default::default()
        };
        let inertia = model.dynamics.inertia_vec();
        let mut observer_params = self.observer.clone();
        for (i, g) in observer_params.gain.iter_mut().enumerate() {
            if i != j {
                *g = 0.0;
            }
        }
        let mut observer =
            FrictionObserver::new(&observer_params, &model.dynamics.stiction, &Vec7::zeros());
        let mut state = JointState::at_rest(Vec7::zeros());
        let target = self.step;
        let ticks = libm::round(self.duration / self.dt) as usize;
        let tail = libm::round(self.window / self.dt) as usize;
        let mut sum = 0.0;
        for k in 0..ticks {
            let mut tau = Vec7::zeros();
            tau[j] = self.kp * (target - state.q[j]) - self.kd * state.dq[j];
            let comp = if observer_on {
                observer.update(&tau, &state.dq, &inertia, self.dt)
            } else {
                Vec7::zeros()
            };
            state = step_dynamics(&model, &state, &(tau + comp), &Vec7::zeros(), self.dt)?;
            if k + tail >= ticks {
                sum += (target - state.q[j]).abs();
            }
        }
        debug_assert!(j < JOINTS);
        Ok(sum / tail.max(1) as f64)
    }
}
