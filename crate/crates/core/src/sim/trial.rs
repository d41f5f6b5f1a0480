//! The behavior sequencer and the multi-rate closed loop: per phase the limb
//! is rendered, segmented and planned once, then the primitive is tracked
//! with one trajectory point every `ticks_per_point` control ticks.

use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::render::render_rgbt;
use super::sensor::ForceSensor;
use super::surface::{fluid_spread, CellState, LimbSurface};
use super::treatment::{apply_treatment, finish_pat};
use crate::config::{ConfigError, ScenarioConfig};
use crate::controller::{
    contact_detector, resultant_torque, task_torque, ControlError, ControllerState,
    FrictionObserver,
};
use crate::geometry::{jacobian_transpose_mul, pose_error, Pose6, Vec3, Vec6, Vec7, Wrench};
use crate::perception::{segment_rgbt, PerceptionError};
use crate::planner::{
    generate_primitive, lift_to_3d, plan_waypoints, target_region, MotionPrimitive, PhaseTag,
    PlanError, Region, TrajectoryPoint,
};
use crate::rng::XorShift64Star;
use crate::robot::{
    gravity_torque_from_frames, inverse_kinematics, jacobian_from_frames, step_dynamics, IkError,
    JointState, RobotError,
};
use crate::tool::{
    contact_patch, solve_tool_equilibrium_with, ContactInputs, ContactSurface, ToolState,
};
use crate::TaskKind;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrialError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Robot(#[from] RobotError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error("cannot reach the home pose: {0}")]
    Home(#[from] IkError),
    #[error("tracker starved: {0} primitive has no points")]
    Starved(&'static str),
    #[error("phase `{0}` requested twice")]
    DuplicatePhase(&'static str),
}

impl TrialError {
    /// Errors caused by the configuration rather than by running it.
    pub fn is_config_error(&self) -> bool {
        matches!(self, TrialError::Config(_) | TrialError::DuplicatePhase(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseStatus {
    Pending,
    Completed,
    /// nothing to treat: the phase ended without moving
    Empty,
    /// perception found nothing where it must find something
    Skipped,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRecord {
    pub task: TaskKind,
    pub status: PhaseStatus,
    pub region_pixels: usize,
    pub waypoints: usize,
    pub points: usize,
    pub first_tick: u64,
    pub ticks: u64,
    /// logged segmentation dead time (s); the arm does not move during it
    pub perception_delay: f64,
    pub warning: Option<String>,
}

/// Ordered phases and their progress.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequencer {
    pub phases: Vec<PhaseRecord>,
    next: usize,
}

impl Sequencer {
    /// Phases are always run wash, rinse, dry, whatever order they are given in.
    pub fn new(tasks: &[TaskKind]) -> Result<Self, TrialError> {
        let mut sorted: Vec<TaskKind> = tasks
            .iter()
            .copied()
            .filter(|t| *t != TaskKind::FreeMotion)
            .collect();
        sorted.sort();
        for pair in sorted.windows(2) {
            if pair[0] == pair[1] {
                return Err(TrialError::DuplicatePhase(pair[0].name()));
            }
        }
        let phases = sorted
            .into_iter()
            .map(|task| PhaseRecord {
                task,
                status: PhaseStatus::Pending,
                region_pixels: 0,
                waypoints: 0,
                points: 0,
                first_tick: 0,
                ticks: 0,
                perception_delay: 0.0,
                warning: None,
            })
            .collect();
        Ok(Sequencer { phases, next: 0 })
    }

    pub fn current(&mut self) -> Option<&mut PhaseRecord> {
        self.phases.get_mut(self.next)
    }

    pub fn advance(&mut self) {
        self.next += 1;
    }

    pub fn is_done(&self) -> bool {
        self.next >= self.phases.len()
    }
}

/// One control tick.
#[derive(Clone, Debug, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    pub t: f64,
    pub task: TaskKind,
    /// index of the trajectory point being tracked within the phase
    pub point: usize,
    pub tag: PhaseTag,
    pub pose: Pose6,
    pub desired_pose: Pose6,
    /// force the tool applies to the skin, as measured and as true (N)
    pub force_measured: Vec3,
    pub force_true: Vec3,
    pub force_desired: Vec3,
    pub tau: Vec7,
    pub saturated: bool,
    pub in_contact: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialLog {
    pub ticks: Vec<TickRecord>,
    pub phases: Vec<PhaseRecord>,
    pub primitives: Vec<MotionPrimitive>,
    pub dt: f64,
    pub ticks_per_point: usize,
}

impl TrialLog {
    /// Lengths of the runs of consecutive ticks spent on one trajectory point.
    pub fn ticks_per_advance(&self) -> Vec<usize> {
        let mut runs: Vec<usize> = Vec::new();
        let mut prev: Option<(TaskKind, usize)> = None;
        for r in &self.ticks {
            let key = Some((r.task, r.point));
            if key == prev {
                if let Some(last) = runs.last_mut() {
                    *last += 1;
                }
            } else {
                runs.push(1);
                prev = key;
            }
        }
        runs
    }
}

/// Summary of a trial. Field order is the serialized key order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageReport {
    /// exposed cells that were soaped at some point (%)
    pub coverage_pct: f64,
    /// cells still carrying soap (%)
    pub residual_soap_pct: f64,
    /// cells still carrying water (%)
    pub residual_water_pct: f64,
    /// largest true contact force magnitude (N)
    pub peak_force_n: f64,
    /// RMS normal force error over ticks with a force reference (N)
    pub force_rms_err_n: f64,
    pub duration_s: f64,
    /// rising edges of torque saturation
    pub saturation_events: u64,
}

impl CoverageReport {
    pub fn from_trial(cfg: &ScenarioConfig, surface: &LimbSurface, log: &TrialLog) -> Self {
        let n = surface.cells.len().max(1) as f64;
        let thr = cfg.report.residual_threshold;
        let residual =
            |state| surface.count(|c| c.state == state && c.amount >= thr) as f64 / n * 100.0;
        let exposed: Vec<usize> = (0..surface.cells.len())
            .filter(|&i| cfg.limb.is_exposed(surface, i))
            .collect();
        let soaped = exposed
            .iter()
            .filter(|&&i| surface.cells[i].ever_soaped)
            .count();
        let coverage_pct = if exposed.is_empty() {
            0.0
        } else {
            soaped as f64 / exposed.len() as f64 * 100.0
        };
        let mut peak: f64 = 0.0;
        let (mut sq, mut count) = (0.0, 0usize);
        let mut events = 0;
        let mut was_saturated = false;
        for r in &log.ticks {
            peak = peak.max(r.force_true.norm());
            if r.force_desired.z != 0.0 {
                let e = r.force_desired.z - r.force_true.z;
                sq += e * e;
                count += 1;
            }
            if r.saturated && !was_saturated {
                events += 1;
            }
            was_saturated = r.saturated;
        }
        CoverageReport {
            coverage_pct,
            residual_soap_pct: residual(CellState::Soapy),
            residual_water_pct: residual(CellState::Wet),
            peak_force_n: peak,
            force_rms_err_n: if count > 0 {
                Float::sqrt(sq / count as f64)
            } else {
                0.0
            },
            duration_s: log.ticks.len() as f64 * log.dt,
            saturation_events: events,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialOutcome {
    pub log: TrialLog,
    pub report: CoverageReport,
    pub surface: LimbSurface,
}

/// Independent random stream `stream` derived from the scenario seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    XorShift64Star::new(seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .next_u64()
}

const STREAM_SENSOR: u64 = 1;
const STREAM_RENDER: u64 = 2;

/// Arm, controller, tool and sensor state carried across phases.
pub(crate) struct Plant<'a> {
    cfg: &'a ScenarioConfig,
    robot: crate::robot::RobotModel,
    joints: JointState,
    controller: ControllerState,
    observer: FrictionObserver,
    sensor: ForceSensor,
    tool: ToolState,
    gains_for: Option<TaskKind>,
    tick: u64,
    reference: Pose6,
}

impl<'a> Plant<'a> {
    pub(crate) fn new(cfg: &'a ScenarioConfig) -> Result<Self, TrialError> {
        let robot = cfg.robot.model();
        let home: Pose6 = cfg.robot.home.into();
        let q = inverse_kinematics(
            &robot.chain,
            &robot.limits,
            &home,
            &Vec7::from(cfg.robot.ik_seed),
        )?;
        let joints = JointState::at_rest(q);
        let pose = robot.chain.frames(&q).tool;
        Ok(Plant {
            cfg,
            observer: FrictionObserver::new(
                &cfg.controller.observer,
                &robot.dynamics.stiction,
                &joints.dq,
            ),
            robot,
            joints,
            controller: ControllerState::new(),
            sensor: ForceSensor::new(cfg.sensor.clone(), sub_seed(cfg.seed, STREAM_SENSOR)),
            tool: ToolState::at_rest(&cfg.tool, pose),
            gains_for: None,
            tick: 0,
            reference: pose,
        })
    }

    /// Runs one control tick toward `point` against `surface`. Returns the
    /// tick's record and the contact wrench on the tool mount.
    pub(crate) fn step(
        &mut self,
        task: TaskKind,
        point_index: usize,
        point: &TrajectoryPoint,
        surface: &dyn ContactSurface,
    ) -> Result<(TickRecord, Wrench), TrialError> {
        let cfg = self.cfg;
        let dt = cfg.timing.dt;
        let frames = self.robot.chain.frames(&self.joints.q);
        let pose = frames.tool;
        let jac = jacobian_from_frames(&frames);
        let twist = jac * self.joints.dq;
        let velocity = Vec3::new(twist[0], twist[1], twist[2]);

        let (tool, wrench) = solve_tool_equilibrium_with(
            &cfg.tool,
            &pose,
            surface,
            &ContactInputs {
                previous: Some(&self.tool),
                dt,
                velocity,
            },
        );
        let force_true = -wrench.force;
        let force_measured = self.sensor.measure(&force_true, self.tick, dt);

        let params = &cfg.controller.params;
        let c = &mut self.controller;
        c.in_contact = contact_detector(
            c.in_contact,
            &force_measured,
            params.contact_threshold,
            params.contact_hysteresis,
        );
        c.measured_force = force_measured;

        let gain_task = if point.phase == PhaseTag::Approach {
            TaskKind::FreeMotion
        } else {
            task
        };
        if self.gains_for != Some(gain_task) {
            c.reset();
            self.gains_for = Some(gain_task);
        }
        let gains = cfg.controller.gains.get(gain_task)?;
        let e_x = pose_error(&point.pose, &pose).to_vec6();
        let e_f = point.force - force_measured;
        let tau_task = task_torque(gains, params, c, &jac, &e_x, &e_f, &point.force, dt)?;
        let gravity = gravity_torque_from_frames(&frames, &self.robot.dynamics);
        let tau_fr = if cfg.controller.observer_enabled {
            let mut sensed = Vec6::zeros();
            sensed.fixed_rows_mut::<3>(0).copy_from(&(-force_measured));
            let drive = tau_task + jacobian_transpose_mul(&jac, &sensed);
            self.observer.update(
                &drive,
                &self.joints.dq,
                &self.robot.dynamics.inertia_vec(),
                dt,
            )
        } else {
            Vec7::zeros()
        };
        let (tau, saturated) =
            resultant_torque(&tau_task, &tau_fr, &gravity, &self.robot.limits.torque);
        c.saturated = saturated;
        if !tau.iter().all(|v| v.is_finite()) {
            return Err(ControlError::NonFinite("joint torque").into());
        }
        let tau_contact = jacobian_transpose_mul(&jac, &wrench.to_vec6());
        self.joints = step_dynamics(&self.robot, &self.joints, &tau, &tau_contact, dt)?;

        self.tool = tool;
        let record = TickRecord {
            tick: self.tick,
            t: self.tick as f64 * dt,
            task,
            point: point_index,
            tag: point.phase,
            pose,
            desired_pose: point.pose,
            force_measured,
            force_true,
            force_desired: point.force,
            tau,
            saturated,
            in_contact: self.controller.in_contact,
        };
        self.tick += 1;
        Ok((record, wrench))
    }

    /// A control tick on the limb followed by treatment of the cells under
    /// the pad and, on schedule, a fluid update.
    fn step_on_limb(
        &mut self,
        task: TaskKind,
        point_index: usize,
        point: &TrajectoryPoint,
        surface: &mut LimbSurface,
        log: &mut Vec<TickRecord>,
    ) -> Result<(), TrialError> {
        let cfg = self.cfg;
        let (record, wrench) = self.step(task, point_index, point, surface)?;
        if self.tool.in_contact {
            let patch = contact_patch(&cfg.tool, &self.tool, surface);
            let normal = wrench.force.dot(&-record.pose.rotate(&Vec3::z()));
            apply_treatment(
                surface,
                &patch,
                task,
                normal.max(0.0),
                cfg.timing.dt,
                &cfg.treatment,
            );
        }
        log.push(record);
        if self
            .tick
            .is_multiple_of(cfg.timing.spread_period_ticks as u64)
        {
            let period = cfg.timing.spread_period_ticks as f64 * cfg.timing.dt;
            fluid_spread(
                surface,
                period,
                cfg.treatment.spread_rate,
                cfg.treatment.temperature_tau,
            );
        }
        Ok(())
    }
}

/// Perceives the limb and plans the phase's primitive from `start`. `None`
/// when there is nothing to treat.
fn plan_phase(
    cfg: &ScenarioConfig,
    surface: &LimbSurface,
    task: TaskKind,
    start: &Pose6,
    render_seed: u64,
) -> Result<(Region, usize, Option<MotionPrimitive>), TrialError> {
    let camera = cfg.camera.model();
    let scene = render_rgbt(surface, &camera, &cfg.render_params(render_seed));
    let mask = segment_rgbt(&scene.rgb, &scene.thermal, &cfg.segmentation)?;
    let region = target_region(&mask, task);
    if region.is_empty() {
        return Ok((region, 0, None));
    }
    let mut depths: Vec<f64> = (0..region.height)
        .flat_map(|y| (0..region.width).map(move |x| (x, y)))
        .filter(|&(x, y)| region.contains(x, y))
        .filter_map(|(x, y)| scene.depth.get_m(x, y))
        .collect();
    if depths.is_empty() {
        return Err(PlanError::NoWaypoints.into());
    }
    depths.sort_by(f64::total_cmp);
    let depth = depths[depths.len() / 2];
    let prim_cfg = cfg.primitive_config();
    let footprint = cfg.footprint().to_pixels(&camera, depth);
    let waypoints = plan_waypoints(&region, &footprint, task, prim_cfg.pat_spacing);
    let lifted = lift_to_3d(&waypoints, &scene.depth, &camera)?;
    let primitive = generate_primitive(task, &lifted, start, &prim_cfg)?;
    Ok((region, waypoints.len(), Some(primitive)))
}

/// Runs the requested phases of `cfg` in canonical order.
pub fn run_trial(cfg: &ScenarioConfig, phases: &[TaskKind]) -> Result<TrialOutcome, TrialError> {
    cfg.validate()?;
    let mut surface = cfg.limb.build();
    let mut sequencer = Sequencer::new(phases)?;
    let mut plant = Plant::new(cfg)?;
    let mut ticks = Vec::new();
    let mut primitives = Vec::new();
    let per_point = cfg.timing.ticks_per_point;

    let mut phase_index = 0u64;
    while let Some(record) = sequencer.current() {
        let task = record.task;
        record.first_tick = plant.tick;
        record.perception_delay = cfg.timing.perception_delay;
        let render_seed = sub_seed(cfg.seed, STREAM_RENDER + 16 * phase_index);
        let (region, waypoints, primitive) =
            plan_phase(cfg, &surface, task, &plant.reference, render_seed)?;
        record.region_pixels = region.count();
        record.waypoints = waypoints;
        let Some(primitive) = primitive else {
            if task == TaskKind::Wash {
                let msg = "no dry skin visible for washing; phase skipped";
                log::warn!("{msg}");
                record.warning = Some(msg.into());
                record.status = PhaseStatus::Skipped;
            } else {
                record.status = PhaseStatus::Empty;
            }
            primitives.push(MotionPrimitive::empty(task));
            sequencer.advance();
            phase_index += 1;
            continue;
        };
        if primitive.points.is_empty() {
            return Err(TrialError::Starved(task.name()));
        }
        record.points = primitive.points.len();
        let count = primitive.points.len();
        for (k, point) in primitive.points.iter().enumerate() {
            for _ in 0..per_point {
                plant.step_on_limb(task, k, point, &mut surface, &mut ticks)?;
            }
            let pat_ends = point.phase == PhaseTag::Pat
                && primitive
                    .points
                    .get(k + 1)
                    .is_none_or(|n| n.phase != PhaseTag::Pat);
            if pat_ends {
                finish_pat(&mut surface, &cfg.treatment);
            }
            plant.reference = point.pose;
        }
        let record = sequencer.current().expect("phase in progress");
        record.ticks = (count * per_point) as u64;
        record.status = PhaseStatus::Completed;
        log::info!(
            "{} done: {} points, {} ticks",
            task.name(),
            count,
            record.ticks
        );
        primitives.push(primitive);
        sequencer.advance();
        phase_index += 1;
    }

    let log = TrialLog {
        ticks,
        phases: sequencer.phases,
        primitives,
        dt: cfg.timing.dt,
        ticks_per_point: per_point,
    };
    let report = CoverageReport::from_trial(cfg, &surface, &log);
    Ok(TrialOutcome {
        log,
        report,
        surface,
    })
}
