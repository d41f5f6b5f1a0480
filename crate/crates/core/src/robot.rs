//! 7-DoF serial arm: Denavit–Hartenberg kinematics, point-mass gravity, a
//! Coulomb/viscous/Stribeck friction model with stiction, and a
//! diagonal-inertia plant integrated with semi-implicit Euler.

use core::f64::consts::{FRAC_PI_2, PI};

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use nalgebra::Matrix6;

use crate::geometry::{pose_error, rot_x, rot_z, Jacobian, Pose6, PoseConfig, Vec3, Vec7};

pub const JOINTS: usize = 7;

/// Joints slower than this are treated as stuck.
pub const STICTION_VELOCITY: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobotError {
    #[error("non-finite joint state after integration (joint {joint})")]
    NonFinite { joint: usize },
    #[error("time step {0} s outside (0, 0.01]")]
    BadTimeStep(f64),
}

/// One row of the DH table: `RotZ(q + theta_offset) · TransZ(d) · TransX(a) · RotX(alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DhParams {
    /// link offset along the previous z axis (m)
    pub d: f64,
    /// link length along the new x axis (m)
    pub a: f64,
    /// twist about the new x axis (rad)
    pub alpha: f64,
    pub theta_offset: f64,
}

impl DhParams {
    fn transform(&self, q: f64) -> Pose6 {
        let rz = Pose6 {
            position: Vec3::new(0.0, 0.0, self.d),
            orientation: rot_z(q + self.theta_offset),
        };
        let rx = Pose6 {
            position: Vec3::new(self.a, 0.0, 0.0),
            orientation: rot_x(self.alpha),
        };
        rz.compose(&rx)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KinematicChain {
    pub joints: [DhParams; JOINTS],
    pub base: Pose6,
    /// tool mount relative to the last joint frame
    pub tool: Pose6,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    pub joints: [DhParams; JOINTS],
    pub base: PoseConfig,
    pub tool: PoseConfig,
}

impl Default for ChainConfig {
    /// Anthropomorphic arm with alternating roll/pitch joints (shoulder
    /// height 0.24 m, upper arm 0.30 m, forearm 0.30 m, flange 0.10 m) and a
    /// 0.12 m gripper offset to the tool mount.
    fn default() -> Self {
        let dh = |d: f64, alpha: f64| DhParams {
            d,
            a: 0.0,
            alpha,
            theta_offset: 0.0,
        };
        ChainConfig {
            joints: [
                dh(0.24, -FRAC_PI_2),
                dh(0.0, FRAC_PI_2),
                dh(0.30, FRAC_PI_2),
                dh(0.0, -FRAC_PI_2),
                dh(0.30, -FRAC_PI_2),
                dh(0.0, FRAC_PI_2),
                dh(0.10, 0.0),
            ],
            base: Pose6::identity().into(),
            tool: Pose6::from_translation(0.0, 0.0, 0.12).into(),
        }
    }
}

impl From<&ChainConfig> for KinematicChain {
    fn from(c: &ChainConfig) -> Self {
        KinematicChain {
            joints: c.joints,
            base: c.base.into(),
            tool: c.tool.into(),
        }
    }
}

impl Default for KinematicChain {
    fn default() -> Self {
        (&ChainConfig::default()).into()
    }
}

/// Frames produced by a forward pass: `frames[0]` is the base, `frames[i]`
/// the frame after joint `i`, and `tool` the tool mount.
#[derive(Clone, Debug)]
pub struct ChainFrames {
    pub frames: [Pose6; JOINTS + 1],
    pub tool: Pose6,
}

impl KinematicChain {
    pub fn frames(&self, q: &Vec7) -> ChainFrames {
        let mut frames = [self.base; JOINTS + 1];
        for i in 0..JOINTS {
            frames[i + 1] = frames[i].compose(&self.joints[i].transform(q[i]));
        }
        let tool = frames[JOINTS].compose(&self.tool);
        ChainFrames { frames, tool }
    }
}

pub fn forward_kinematics(chain: &KinematicChain, q: &Vec7) -> Pose6 {
    chain.frames(q).tool
}

/// Geometric Jacobian of the tool mount: rows 0..3 linear velocity, rows
/// 3..6 angular velocity, both in the base frame.
pub fn jacobian(chain: &KinematicChain, q: &Vec7) -> Jacobian {
    jacobian_from_frames(&chain.frames(q))
}

pub fn jacobian_from_frames(f: &ChainFrames) -> Jacobian {
    let p = f.tool.position;
    let mut j = Jacobian::zeros();
    for i in 0..JOINTS {
        let axis = f.frames[i].rotate(&Vec3::z());
        let lin = axis.cross(&(p - f.frames[i].position));
        for r in 0..3 {
            j[(r, i)] = lin[r];
            j[(r + 3, i)] = axis[r];
        }
    }
    j
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsParams {
    /// diagonal joint inertia (kg·m²)
    pub inertia: [f64; JOINTS],
    /// N·m·s/rad
    pub viscous: [f64; JOINTS],
    /// N·m
    pub coulomb: [f64; JOINTS],
    /// breakaway torque (N·m), at least `coulomb`
    pub stiction: [f64; JOINTS],
    /// rad/s
    pub stribeck_velocity: f64,
    /// point mass per link (kg); the last one carries gripper and tool
    pub link_masses: [f64; JOINTS],
    /// center of mass of link `i` in the frame after joint `i` (m)
    pub link_centers: [[f64; 3]; JOINTS],
    /// m/s² in the base frame's parent
    pub gravity: [f64; 3],
}

impl Default for DynamicsParams {
    fn default() -> Self {
        let coulomb = [0.5, 0.5, 0.4, 0.4, 0.15, 0.15, 0.1];
        DynamicsParams {
            inertia: [0.6, 0.6, 0.3, 0.3, 0.08, 0.08, 0.04],
            viscous: [0.5, 0.5, 0.3, 0.3, 0.1, 0.1, 0.05],
            coulomb,
            stiction: coulomb.map(|c| 1.6 * c),
            stribeck_velocity: 0.02,
            link_masses: [1.4, 1.2, 1.2, 0.9, 0.7, 0.7, 1.2],
            link_centers: [
                [0.0, 0.0, 0.0],
                [0.0, 0.0, 0.15],
                [0.0, 0.0, 0.0],
                [0.0, 0.0, 0.15],
                [0.0, 0.0, 0.0],
                [0.0, 0.0, 0.05],
                [0.0, 0.0, 0.06],
            ],
            gravity: [0.0, 0.0, -9.81],
        }
    }
}

impl DynamicsParams {
    pub fn inertia_vec(&self) -> Vec7 {
        Vec7::from(self.inertia)
    }

    pub fn without_gravity(mut self) -> Self {
        self.gravity = [0.0; 3];
        self
    }

    pub fn frictionless(mut self) -> Self {
        self.viscous = [0.0; JOINTS];
        self.coulomb = [0.0; JOINTS];
        self.stiction = [0.0; JOINTS];
        self
    }
}

/// Torque the motors must supply to hold the arm against gravity.
pub fn gravity_torque(chain: &KinematicChain, params: &DynamicsParams, q: &Vec7) -> Vec7 {
    gravity_torque_from_frames(&chain.frames(q), params)
}

pub fn gravity_torque_from_frames(f: &ChainFrames, params: &DynamicsParams) -> Vec7 {
    let g = Vec3::from(params.gravity);
    let mut tau = Vec7::zeros();
    for j in 0..JOINTS {
        let m = params.link_masses[j];
        if m == 0.0 {
            continue;
        }
        let c = f.frames[j + 1].transform_point(&Vec3::from(params.link_centers[j]));
        let weight = g * m;
        for i in 0..=j {
            let axis = f.frames[i].rotate(&Vec3::z());
            let lever = c - f.frames[i].position;
            // holding torque cancels the moment of the weight about the axis
            tau[i] -= axis.dot(&lever.cross(&weight));
        }
    }
    tau
}

/// Friction torque resisting joint motion, to be subtracted from the net
/// drive torque.
///
/// `tau_external` is the net non-friction torque on each joint; in the stuck
/// regime friction cancels it up to the breakaway limit.
pub fn friction_torque(params: &DynamicsParams, dq: &Vec7, tau_external: &Vec7) -> Vec7 {
    let mut out = Vec7::zeros();
    for i in 0..JOINTS {
        out[i] = joint_friction(params, i, dq[i], tau_external[i]);
    }
    out
}

fn joint_friction(p: &DynamicsParams, i: usize, dq: f64, tau_ext: f64) -> f64 {
    let (fc, fs, fv) = (p.coulomb[i], p.stiction[i], p.viscous[i]);
    if dq.abs() < STICTION_VELOCITY {
        return tau_ext.clamp(-fs, fs);
    }
    let stribeck = if p.stribeck_velocity > 0.0 {
        let r = dq.abs() / p.stribeck_velocity;
        (fs - fc) * Float::exp(-r * r)
    } else {
        0.0
    };
    dq.signum() * (fc + stribeck) + fv * dq
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JointState {
    pub q: Vec7,
    pub dq: Vec7,
    pub tau_applied: Vec7,
}

impl JointState {
    pub fn at_rest(q: Vec7) -> Self {
        JointState {
            q,
            dq: Vec7::zeros(),
            tau_applied: Vec7::zeros(),
        }
    }

    pub fn kinetic_energy(&self, inertia: &Vec7) -> f64 {
        0.5 * self.dq.component_mul(&self.dq).dot(inertia)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JointLimits {
    pub q_min: [f64; JOINTS],
    pub q_max: [f64; JOINTS],
    /// N·m, symmetric
    pub torque: [f64; JOINTS],
}

impl Default for JointLimits {
    fn default() -> Self {
        let wide = 170.0 * PI / 180.0;
        let bend = 120.0 * PI / 180.0;
        let q_max = [wide, bend, wide, bend, wide, bend, wide];
        JointLimits {
            q_min: q_max.map(|v| -v),
            q_max,
            torque: [39.0, 39.0, 39.0, 39.0, 9.0, 9.0, 9.0],
        }
    }
}

/// Everything the plant needs to advance one step.
#[derive(Clone, Debug, Default)]
pub struct RobotModel {
    pub chain: KinematicChain,
    pub dynamics: DynamicsParams,
    pub limits: JointLimits,
}

/// Semi-implicit Euler step of the diagonal-inertia plant.
///
/// `tau_contact` is the generalized external torque `Jᵀ·W` of the contact
/// wrench acting on the tool mount.
pub fn step_dynamics(
    model: &RobotModel,
    state: &JointState,
    tau_command: &Vec7,
    tau_contact: &Vec7,
    dt: f64,
) -> Result<JointState, RobotError> {
    if !(dt > 0.0 && dt <= 0.01) {
        return Err(RobotError::BadTimeStep(dt));
    }
    let gravity = gravity_torque(&model.chain, &model.dynamics, &state.q);
    let p = &model.dynamics;
    let mut next = *state;
    next.tau_applied = *tau_command;
    for i in 0..JOINTS {
        let drive = tau_command[i] - gravity[i] + tau_contact[i];
        let fr = joint_friction(p, i, state.dq[i], drive);
        let ddq = (drive - fr) / p.inertia[i];
        let mut dq = state.dq[i] + ddq * dt;
        let held = drive.abs() <= p.stiction[i];
        if state.dq[i].abs() < STICTION_VELOCITY {
            if held {
                dq = 0.0;
            }
        } else if held && dq * state.dq[i] < 0.0 {
            // friction can stop a joint but never reverse it
            dq = 0.0;
        }
        let mut q = state.q[i] + dq * dt;
        let (lo, hi) = (model.limits.q_min[i], model.limits.q_max[i]);
        if q < lo {
            q = lo;
            dq = 0.0;
        } else if q > hi {
            q = hi;
            dq = 0.0;
        }
        if !(q.is_finite() && dq.is_finite()) {
            return Err(RobotError::NonFinite { joint: i });
        }
        next.q[i] = q;
        next.dq[i] = dq;
    }
    Ok(next)
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("inverse kinematics did not converge (residual {residual:.3e})")]
pub struct IkError {
    pub residual: f64,
}

/// Damped least-squares inverse kinematics for the tool mount, started from
/// `seed` and kept inside the joint limits.
pub fn inverse_kinematics(
    chain: &KinematicChain,
    limits: &JointLimits,
    target: &Pose6,
    seed: &Vec7,
) -> Result<Vec7, IkError> {
    const DAMPING: f64 = 0.05;
    const TOLERANCE: f64 = 1e-10;
    const MAX_STEP: f64 = 0.2;
    let mut q = *seed;
    let mut residual = f64::INFINITY;
    for _ in 0..500 {
        let frames = chain.frames(&q);
        let e = pose_error(target, &frames.tool).to_vec6();
        residual = e.norm();
        if residual < TOLERANCE {
            return Ok(q);
        }
        let j = jacobian_from_frames(&frames);
        let jjt = j * j.transpose() + Matrix6::identity() * (DAMPING * DAMPING);
        let Some(step) = jjt.cholesky().map(|c| c.solve(&e)) else {
            break;
        };
        let mut dq = j.tr_mul(&step);
        let largest = dq.amax();
        if largest > MAX_STEP {
            dq *= MAX_STEP / largest;
        }
        for i in 0..JOINTS {
            q[i] = (q[i] + dq[i]).clamp(limits.q_min[i], limits.q_max[i]);
        }
    }
    Err(IkError { residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::XorShift64Star;

    fn random_q(rng: &mut XorShift64Star) -> Vec7 {
        Vec7::from_fn(|_, _| rng.uniform(-2.0, 2.0))
    }

    // home pose at q = 0: arm points straight up, 1.06 m tall, tool z up
    #[test]
    fn home_pose_fixture() {
        let chain = KinematicChain::default();
        let p = forward_kinematics(&chain, &Vec7::zeros());
        assert!((p.position - Vec3::new(0.0, 0.0, 1.06)).norm() < 1e-12);
        let z = p.rotate(&Vec3::z());
        assert!((z - Vec3::z()).norm() < 1e-12);
    }

    #[test]
    fn joint_one_half_turn_negates_xy() {
        let chain = KinematicChain::default();
        let mut rng = XorShift64Star::new(3);
        for _ in 0..20 {
            let q = random_q(&mut rng);
            let mut q2 = q;
            q2[0] += PI;
            let a = forward_kinematics(&chain, &q).position;
            let b = forward_kinematics(&chain, &q2).position;
            assert!((a.x + b.x).abs() < 1e-12);
            assert!((a.y + b.y).abs() < 1e-12);
            assert!((a.z - b.z).abs() < 1e-12);
        }
    }

    #[test]
    fn base_shift_shifts_tool() {
        let mut chain = KinematicChain::default();
        let q = Vec7::from([0.3, 0.5, -0.2, -1.1, 0.4, 0.9, 0.1]);
        let before = forward_kinematics(&chain, &q).position;
        chain.base = Pose6::from_translation(0.0, 0.0, 1.0);
        let after = forward_kinematics(&chain, &q).position;
        assert!((after - before - Vec3::new(0.0, 0.0, 1.0)).norm() < 1e-12);
    }

    #[test]
    fn revolute_column_geometry() {
        // single rotating joint about base z, tool at distance r along x
        let mut chain = KinematicChain::default();
        let r = 0.7;
        chain.joints = [DhParams {
            d: 0.0,
            a: 0.0,
            alpha: 0.0,
            theta_offset: 0.0,
        }; JOINTS];
        chain.joints[0].a = r;
        let j = jacobian(&chain, &Vec7::zeros());
        let col: [f64; 6] = core::array::from_fn(|k| j[(k, 0)]);
        let expect = [0.0, r, 0.0, 0.0, 0.0, 1.0];
        for k in 0..6 {
            assert!((col[k] - expect[k]).abs() < 1e-12, "{col:?}");
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let chain = KinematicChain::default();
        let mut rng = XorShift64Star::new(11);
        for _ in 0..100 {
            let q = random_q(&mut rng);
            let err = jacobian_fd_error(&chain, &q, 1e-6);
            assert!(err < 1e-5, "max deviation {err}");
        }
    }

    /// Central-difference oracle, independent of `jacobian`.
    pub(crate) fn jacobian_fd_error(chain: &KinematicChain, q: &Vec7, h: f64) -> f64 {
        let j = jacobian(chain, q);
        let mut worst: f64 = 0.0;
        for i in 0..JOINTS {
            let mut qp = *q;
            let mut qm = *q;
            qp[i] += h;
            qm[i] -= h;
            let pp = forward_kinematics(chain, &qp);
            let pm = forward_kinematics(chain, &qm);
            let lin = (pp.position - pm.position) / (2.0 * h);
            let rel = pp.orientation * pm.orientation.inverse();
            let ang = crate::geometry::quat_log(&rel) / (2.0 * h);
            for r in 0..3 {
                worst = worst.max((lin[r] - j[(r, i)]).abs());
                worst = worst.max((ang[r] - j[(r + 3, i)]).abs());
            }
        }
        worst
    }

    #[test]
    fn stretched_configuration_is_singular() {
        let chain = KinematicChain::default();
        let j = jacobian(&chain, &Vec7::zeros());
        let smallest = smallest_singular_value(&j);
        assert!(smallest < 1e-8, "smallest singular value {smallest}");
    }

    /// Smallest singular value via inverse-free power iteration on
    /// `λ_max·I − JJᵀ` (JJᵀ is 6×6).
    fn smallest_singular_value(j: &Jacobian) -> f64 {
        let a = j * j.transpose();
        let mut v = nalgebra::Vector6::from_element(1.0);
        let mut lmax = 0.0;
        for _ in 0..500 {
            let w = a * v;
            lmax = w.norm();
            v = w / lmax;
        }
        let b = nalgebra::Matrix6::identity() * lmax - a;
        let mut v = nalgebra::Vector6::new(0.3, -0.1, 0.7, 0.2, -0.5, 0.4);
        let mut mu = 0.0;
        for _ in 0..5000 {
            let w = b * v;
            mu = w.norm();
            v = w / mu;
        }
        let lmin: f64 = lmax - mu;
        Float::sqrt(lmin.max(0.0))
    }

    #[test]
    fn gravity_zero_masses() {
        let chain = KinematicChain::default();
        let p = DynamicsParams {
            link_masses: [0.0; JOINTS],
            ..Default::default()
        };
        let g = gravity_torque(
            &chain,
            &p,
            &Vec7::from([0.3, 0.8, 0.1, -1.0, 0.2, 0.5, 0.0]),
        );
        assert_eq!(g, Vec7::zeros());
    }

    #[test]
    fn gravity_hanging_arm() {
        // upside-down mount: arm hangs along gravity, roll joints feel nothing
        let chain = KinematicChain {
            base: Pose6::from_axis_angle(Vec3::x(), PI),
            ..Default::default()
        };
        let g = gravity_torque(&chain, &DynamicsParams::default(), &Vec7::zeros());
        for i in 0..JOINTS {
            assert!(g[i].abs() < 1e-12, "joint {i}: {}", g[i]);
        }
    }

    #[test]
    fn gravity_single_distal_mass() {
        // joint 2 is horizontal at q = 0; bend it 90° so the distal mass
        // sits at horizontal reach r from the axis
        let chain = KinematicChain::default();
        let mut p = DynamicsParams {
            link_masses: [0.0; JOINTS],
            ..Default::default()
        };
        p.link_masses[6] = 2.0;
        p.link_centers[6] = [0.0, 0.0, 0.0];
        let mut q = Vec7::zeros();
        q[1] = FRAC_PI_2;
        let g = gravity_torque(&chain, &p, &q);
        let r = 0.30 + 0.30 + 0.10;
        assert!((g[1].abs() - 2.0 * 9.81 * r).abs() < 1e-9, "{}", g[1]);
        // static check: holding torque balances the weight's moment
        let f = chain.frames(&q);
        let c = f.frames[7].position;
        let lever = c - f.frames[1].position;
        assert!((lever.z).abs() < 1e-12);
    }

    #[test]
    fn friction_examples() {
        let mut p = DynamicsParams::default();
        assert_eq!(
            friction_torque(&p, &Vec7::zeros(), &Vec7::zeros()),
            Vec7::zeros()
        );

        let stuck = Vec7::from(p.stiction) * 0.5;
        let f = friction_torque(&p, &Vec7::zeros(), &stuck);
        assert_eq!(f, stuck);

        p.coulomb = [1.0; JOINTS];
        p.viscous = [0.5; JOINTS];
        p.stiction = [2.0; JOINTS];
        p.stribeck_velocity = 0.1;
        let f = friction_torque(&p, &Vec7::from_element(1.0), &Vec7::zeros());
        let expect = 1.0 + 0.5 + (2.0 - 1.0) * (-100.0f64).exp();
        assert!((f[0] - expect).abs() < 1e-15);
        assert!((f[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn friction_dissipates() {
        let p = DynamicsParams::default();
        let mut rng = XorShift64Star::new(5);
        for _ in 0..1000 {
            let dq = Vec7::from_fn(|_, _| rng.uniform(-2.0, 2.0));
            let ext = Vec7::from_fn(|_, _| rng.uniform(-5.0, 5.0));
            let f = friction_torque(&p, &dq, &ext);
            for i in 0..JOINTS {
                // power delivered by friction (−f·dq) is never positive
                assert!(-f[i] * dq[i] <= 0.0);
            }
        }
    }

    #[test]
    fn gravity_compensated_rest_is_equilibrium() {
        let model = RobotModel {
            dynamics: DynamicsParams::default().frictionless(),
            ..Default::default()
        };
        let q = Vec7::from([0.2, 0.7, -0.1, -1.2, 0.3, 0.8, 0.0]);
        let s = JointState::at_rest(q);
        let g = gravity_torque(&model.chain, &model.dynamics, &q);
        let next = step_dynamics(&model, &s, &g, &Vec7::zeros(), 1e-3).unwrap();
        assert!((next.q - q).norm() < 1e-12);
        assert!(next.dq.norm() < 1e-12);
    }

    #[test]
    fn constant_torque_accelerates_linearly() {
        let mut dynamics = DynamicsParams::default().frictionless().without_gravity();
        dynamics.inertia = [1.0; JOINTS];
        let model = RobotModel {
            dynamics,
            ..Default::default()
        };
        let mut s = JointState::at_rest(Vec7::zeros());
        let mut tau = Vec7::zeros();
        tau[0] = 1.0;
        for _ in 0..1000 {
            s = step_dynamics(&model, &s, &tau, &Vec7::zeros(), 1e-3).unwrap();
        }
        assert!((s.dq[0] - 1.0).abs() < 1e-3);
    }

    #[test]
    fn viscous_steady_state() {
        let mut dynamics = DynamicsParams::default().frictionless().without_gravity();
        dynamics.viscous[0] = 2.0;
        let model = RobotModel {
            dynamics,
            limits: JointLimits {
                q_min: [-1e6; JOINTS],
                q_max: [1e6; JOINTS],
                ..Default::default()
            },
            ..Default::default()
        };
        let mut s = JointState::at_rest(Vec7::zeros());
        let mut tau = Vec7::zeros();
        tau[0] = 3.0;
        for _ in 0..10_000 {
            s = step_dynamics(&model, &s, &tau, &Vec7::zeros(), 1e-3).unwrap();
        }
        assert!((s.dq[0] - 1.5).abs() / 1.5 < 0.01);
    }

    #[test]
    fn friction_never_adds_energy() {
        let model = RobotModel {
            dynamics: DynamicsParams::default().without_gravity(),
            ..Default::default()
        };
        let inertia = model.dynamics.inertia_vec();
        let mut s = JointState::at_rest(Vec7::zeros());
        s.dq = Vec7::from([1.0, -0.5, 0.8, -1.2, 2.0, -0.3, 0.05]);
        let mut e = s.kinetic_energy(&inertia);
        for _ in 0..3000 {
            s = step_dynamics(&model, &s, &Vec7::zeros(), &Vec7::zeros(), 1e-3).unwrap();
            let e2 = s.kinetic_energy(&inertia);
            assert!(e2 <= e + 1e-15);
            e = e2;
        }
        assert!(e < 1e-12);
    }

    #[test]
    fn joint_limit_stops_motion() {
        let model = RobotModel {
            dynamics: DynamicsParams::default().frictionless().without_gravity(),
            ..Default::default()
        };
        let mut s = JointState::at_rest(Vec7::zeros());
        s.q[1] = model.limits.q_max[1] - 1e-4;
        s.dq[1] = 1.0;
        let s = step_dynamics(&model, &s, &Vec7::zeros(), &Vec7::zeros(), 1e-3).unwrap();
        assert_eq!(s.q[1], model.limits.q_max[1]);
        assert_eq!(s.dq[1], 0.0);
    }

    #[test]
    fn rejects_bad_dt_and_nan() {
        let model = RobotModel::default();
        let s = JointState::at_rest(Vec7::zeros());
        assert!(step_dynamics(&model, &s, &Vec7::zeros(), &Vec7::zeros(), 0.0).is_err());
        let mut tau = Vec7::zeros();
        tau[2] = f64::NAN;
        assert_eq!(
            step_dynamics(&model, &s, &tau, &Vec7::zeros(), 1e-3),
            Err(RobotError::NonFinite { joint: 2 })
        );
    }

    #[test]
    fn ik_reaches_face_down_pose_over_bed() {
        let chain = KinematicChain::default();
        let limits = JointLimits::default();
        let target = Pose6 {
            position: Vec3::new(0.5, 0.0, 0.25),
            orientation: rot_x(PI),
        };
        let seed = Vec7::from([0.0, 0.6, 0.0, -1.6, 0.0, -1.0, 0.0]);
        let q = inverse_kinematics(&chain, &limits, &target, &seed).unwrap();
        let e = pose_error(&target, &forward_kinematics(&chain, &q));
        assert!(e.translational.norm() < 1e-9 && e.rotational.norm() < 1e-9);
    }

    #[test]
    fn ik_reports_unreachable_target() {
        let chain = KinematicChain::default();
        let target = Pose6::from_translation(3.0, 0.0, 0.0);
        let err = inverse_kinematics(&chain, &JointLimits::default(), &target, &Vec7::zeros())
            .unwrap_err();
        assert!(err.residual > 1.0);
    }
}
