//! Model-free joint friction observer.
//!
//! A friction-free nominal plant `I·q̈ₙ = τ_drive` runs alongside the real
//! arm. The gap between nominal and measured joint velocity is turned into a
//! compensation torque `τ_fr,nom = L·I·(q̇ₙ − q̇)`; the nominal velocity
//! slowly leaks toward the measurement so the two cannot drift apart.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec7;
use crate::robot::JOINTS;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserverParams {
    /// observer gain L per joint (1/s); zero disables the joint
    pub gain: [f64; JOINTS],
    /// time constant of the nominal-velocity leak (s)
    pub leak_time_constant: f64,
    /// compensation clamp above the joint's stiction torque (fraction)
    pub clamp_margin: f64,
}

impl Default for ObserverParams {
    fn default() -> Self {
        ObserverParams {
            gain: [20.0; JOINTS],
            leak_time_constant: 1.0,
            clamp_margin: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrictionObserver {
    pub nominal_dq: Vec7,
    pub gain: Vec7,
    pub leak_time_constant: f64,
    /// symmetric clamp on the compensation torque (N·m)
    pub clamp: Vec7,
    pub tau_fr_nom: Vec7,
}

impl FrictionObserver {
    pub fn new(params: &ObserverParams, stiction: &[f64; JOINTS], dq: &Vec7) -> Self {
        FrictionObserver {
            nominal_dq: *dq,
            gain: Vec7::from(params.gain),
            leak_time_constant: params.leak_time_constant,
            clamp: Vec7::from(stiction.map(|s| s * (1.0 + params.clamp_margin))),
            tau_fr_nom: Vec7::zeros(),
        }
    }

    /// Resynchronise with the measured velocity and drop the estimate.
    pub fn reset(&mut self, dq: &Vec7) {
        self.nominal_dq = *dq;
        self.tau_fr_nom = Vec7::zeros();
    }

    /// Advances the nominal plant by one step and returns the new
    /// compensation torque.
    ///
    /// `tau_drive` is everything the real arm receives except gravity and the
    /// compensation itself: the task torque plus the measured external torque.
    pub fn update(
        &mut self,
        tau_drive: &Vec7,
        dq_measured: &Vec7,
        inertia: &Vec7,
        dt: f64,
    ) -> Vec7 {
        for i in 0..JOINTS {
            let l = self.gain[i];
            if l <= 0.0 {
                self.nominal_dq[i] = dq_measured[i];
                self.tau_fr_nom[i] = 0.0;
                continue;
            }
            let mut n = self.nominal_dq[i] + tau_drive[i] / inertia[i] * dt;
            if self.leak_time_constant > 0.0 {
                n += (dq_measured[i] - n) * (dt / self.leak_time_constant).min(1.0);
            }
            self.nominal_dq[i] = n;
            let c = self.clamp[i];
            self.tau_fr_nom[i] = (l * inertia[i] * (n - dq_measured[i])).clamp(-c, c);
        }
        self.tau_fr_nom
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::robot::{DynamicsParams, JointLimits, JointState, RobotModel};

    #[test]
    fn perfect_tracking_gives_no_compensation() {
        let p = ObserverParams::default();
        let stiction = [1.0; JOINTS];
        let mut obs = FrictionObserver::new(&p, &stiction, &Vec7::zeros());
        let inertia = Vec7::from_element(0.5);
        let tau = Vec7::from_element(0.3);
        let mut dq = Vec7::zeros();
        for _ in 0..500 {
            // frictionless plant with the same drive
            dq += tau.component_div(&inertia) * 1e-3;
            let out = obs.update(&tau, &dq, &inertia, 1e-3);
            assert!(out.norm() < 1e-9);
        }
    }

    #[test]
    fn disabled_observer_is_silent() {
        let p = ObserverParams {
            gain: [0.0; JOINTS],
            ..Default::default()
        };
        let mut obs = FrictionObserver::new(&p, &[1.0; JOINTS], &Vec7::zeros());
        for _ in 0..100 {
            let out = obs.update(
                &Vec7::from_element(2.0),
                &Vec7::zeros(),
                &Vec7::from_element(0.1),
                1e-3,
            );
            assert_eq!(out, Vec7::zeros());
        }
    }

    /// One joint held by stiction under a constant command of half the
    /// breakaway torque; the observer must free it.
    fn breakaway_time(gain: f64) -> Option<f64> {
        let mut dynamics = DynamicsParams::default().without_gravity();
        dynamics.stiction = [2.0; JOINTS];
        dynamics.coulomb = [1.0; JOINTS];
        dynamics.inertia = [0.3; JOINTS];
        let model = RobotModel {
            dynamics,
            limits: JointLimits {
                q_min: [-100.0; JOINTS],
                q_max: [100.0; JOINTS],
                torque: [100.0; JOINTS],
            },
            ..Default::default()
        };
        let p = ObserverParams {
            gain: [gain; JOINTS],
            ..Default::default()
        };
        let mut obs = FrictionObserver::new(&p, &model.dynamics.stiction, &Vec7::zeros());
        let inertia = model.dynamics.inertia_vec();
        let mut tau_task = Vec7::zeros();
        tau_task[0] = 0.5 * model.dynamics.stiction[0];
        let mut s = JointState::at_rest(Vec7::zeros());
        let dt = 1e-3;
        for k in 0..2000 {
            let fr = obs.update(&tau_task, &s.dq, &inertia, dt);
            s = crate::robot::step_dynamics(&model, &s, &(tau_task + fr), &Vec7::zeros(), dt)
                .unwrap();
            if s.dq[0].abs() > crate::robot::STICTION_VELOCITY {
                return Some(k as f64 * dt);
            }
        }
        None
    }

    #[test]
    fn stuck_joint_breaks_away() {
        let t = breakaway_time(20.0).expect("joint never moved");
        assert!(t < 0.5, "breakaway after {t} s");
        assert_eq!(breakaway_time(0.0), None);
    }

    #[test]
    fn compensation_is_clamped() {
        let p = ObserverParams::default();
        let mut obs = FrictionObserver::new(&p, &[1.0; JOINTS], &Vec7::zeros());
        for _ in 0..5000 {
            let out = obs.update(
                &Vec7::from_element(50.0),
                &Vec7::zeros(),
                &Vec7::from_element(0.2),
                1e-3,
            );
            assert!(out.iter().all(|v| v.abs() <= 1.25 + 1e-12));
        }
    }
}
