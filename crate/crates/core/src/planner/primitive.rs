use alloc::vec;
use alloc::vec::Vec;

use nalgebra::Quaternion;
use serde::{Deserialize, Serialize};

use super::{
    CameraModel, MotionPrimitive, PhaseTag, PlanError, Region, ToolFootprint, TrajectoryPoint,
    WaypointSet, FORCE_CAP,
};
use crate::geometry::{quat_log, slerp, Pose6, Quat, Vec3};
use crate::TaskKind;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrimitiveConfig {
    /// in-contact stroke speed (m/s)
    pub stroke_speed: f64,
    /// free-space speed between strokes (m/s)
    pub transit_speed: f64,
    /// vertical approach and retreat speed (m/s)
    pub descend_speed: f64,
    /// orientation change rate during transit (rad/s)
    pub turn_rate: f64,
    pub lift_height: f64,
    /// seconds
    pub pat_hold: f64,
    /// pat spacing in tool lengths
    pub pat_spacing: f64,
    /// pressing dwell before each stroke starts moving (s)
    pub press_settle: f64,
    /// tracker rate (Hz)
    pub rate_hz: f64,
    /// normal force magnitudes (N)
    pub wash_force: f64,
    pub rinse_force: f64,
    pub dry_force: f64,
    /// distance from tool mount to skin at zero compression (m)
    pub tool_rest_length: f64,
    /// summed spring stiffness of the tool (N/m)
    pub tool_stiffness: f64,
    /// tool orientation while working, `(w, x, y, z)`
    pub orientation: [f64; 4],
}

impl Default for PrimitiveConfig {
    fn default() -> Self {
        PrimitiveConfig {
            stroke_speed: 0.03,
            transit_speed: 0.08,
            descend_speed: 0.04,
            turn_rate: 1.0,
            lift_height: 0.04,
            pat_hold: 0.7,
            pat_spacing: 0.8,
            press_settle: 0.25,
            rate_hz: 70.0,
            wash_force: 5.0,
            rinse_force: 5.0,
            dry_force: 3.0,
            tool_rest_length: 0.03,
            tool_stiffness: 1200.0,
            orientation: [0.0, 1.0, 0.0, 0.0],
        }
    }
}

impl PrimitiveConfig {
    pub fn working_orientation(&self) -> Quat {
        let [w, x, y, z] = self.orientation;
        Quat::new_normalize(Quaternion::new(w, x, y, z))
    }

    pub fn force_for(&self, task: TaskKind) -> f64 {
        match task {
            TaskKind::Wash => self.wash_force,
            TaskKind::Rinse => self.rinse_force,
            TaskKind::Dry => self.dry_force,
            TaskKind::FreeMotion => 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        for f in [self.wash_force, self.rinse_force, self.dry_force] {
            if !(f.abs() <= FORCE_CAP) {
                return Err(PlanError::ForceCap(f));
            }
        }
        Ok(())
    }
}

struct Builder<'a> {
    cfg: &'a PrimitiveConfig,
    points: Vec<TrajectoryPoint>,
    pose: Pose6,
    tick: u64,
}

impl<'a> Builder<'a> {
    fn new(cfg: &'a PrimitiveConfig, start: Pose6) -> Self {
        let mut b = Builder {
            cfg,
            points: Vec::new(),
            pose: start,
            tick: 0,
        };
        b.emit(Vec3::zeros(), PhaseTag::Approach);
        b
    }

    fn emit(&mut self, force: Vec3, phase: PhaseTag) {
        self.points.push(TrajectoryPoint {
            t: self.tick as f64 / self.cfg.rate_hz,
            pose: self.pose,
            force,
            phase,
        });
        self.tick += 1;
    }

    fn move_to(&mut self, target: Vec3, speed: f64, force: Vec3, phase: PhaseTag) {
        let goal = self.cfg.working_orientation();
        let from = self.pose;
        let dist = (target - from.position).norm();
        let angle = quat_log(&Quat::new_normalize(
            goal.into_inner() * from.orientation.inverse().into_inner(),
        ))
        .norm();
        let duration = (dist / speed).max(angle / self.cfg.turn_rate);
        let steps = libm::ceil(duration * self.cfg.rate_hz - 1e-9) as u64;
        for k in 1..=steps {
            let s = (k as f64 / (duration * self.cfg.rate_hz)).min(1.0);
            self.pose = Pose6 {
                position: from.position + (target - from.position) * s,
                orientation: slerp(&from.orientation, &goal, s),
            };
            self.emit(force, phase);
        }
        self.pose = Pose6 {
            position: target,
            orientation: if steps > 0 {
                goal
            } else {
                self.pose.orientation
            },
        };
    }

    fn hold(&mut self, seconds: f64, force: Vec3, phase: PhaseTag) {
        let steps = libm::round(seconds * self.cfg.rate_hz) as u64;
        for _ in 0..steps {
            self.emit(force, phase);
        }
    }
}

/// Builds the timed pose and force sequence for one task from lifted
/// waypoints, starting at the current tool pose.
pub fn generate_primitive(
    task: TaskKind,
    waypoints: &WaypointSet,
    start: &Pose6,
    cfg: &PrimitiveConfig,
) -> Result<MotionPrimitive, PlanError> {
    cfg.validate()?;
    let pts: Vec<(Vec3, usize)> = waypoints
        .waypoints
        .iter()
        .filter_map(|w| w.point.map(|p| (p, w.strip)))
        .collect();
    if pts.is_empty() {
        return Err(PlanError::NoWaypoints);
    }
    let f = cfg.force_for(task);
    let press = Vec3::new(0.0, 0.0, -f);
    let zero = Vec3::zeros();
    let up = Vec3::new(0.0, 0.0, cfg.lift_height);
    let contact = |p: Vec3| p + Vec3::new(0.0, 0.0, cfg.tool_rest_length - f / cfg.tool_stiffness);
    let above = |p: Vec3| contact(p) + up;

    let mut b = Builder::new(cfg, *start);
    let first = pts[0].0;
    b.move_to(above(first), cfg.transit_speed, zero, PhaseTag::Approach);

    match task {
        TaskKind::Wash | TaskKind::FreeMotion => {
            b.move_to(contact(first), cfg.descend_speed, zero, PhaseTag::Approach);
            b.hold(cfg.press_settle, press, PhaseTag::Stroke);
            for &(p, _) in &pts[1..] {
                b.move_to(contact(p), cfg.stroke_speed, press, PhaseTag::Stroke);
            }
            let last = pts[pts.len() - 1].0;
            b.move_to(above(last), cfg.descend_speed, zero, PhaseTag::Lift);
        }
        TaskKind::Rinse => {
            let strips = group_by_strip(&pts);
            for (i, strip) in strips.iter().enumerate() {
                let (s, e) = (strip[0], strip[strip.len() - 1]);
                if i > 0 {
                    b.move_to(above(s), cfg.transit_speed, zero, PhaseTag::Lift);
                }
                for rep in 0..2 {
                    b.move_to(contact(s), cfg.descend_speed, zero, PhaseTag::Lift);
                    b.hold(cfg.press_settle, press, PhaseTag::Stroke);
                    for &p in &strip[1..] {
                        b.move_to(contact(p), cfg.stroke_speed, press, PhaseTag::Stroke);
                    }
                    b.move_to(above(e), cfg.descend_speed, zero, PhaseTag::Lift);
                    if rep == 0 {
                        b.move_to(above(s), cfg.transit_speed, zero, PhaseTag::Lift);
                    }
                }
            }
        }
        TaskKind::Dry => {
            for (i, &(p, _)) in pts.iter().enumerate() {
                if i > 0 {
                    b.move_to(above(p), cfg.transit_speed, zero, PhaseTag::Lift);
                }
                b.move_to(contact(p), cfg.descend_speed, zero, PhaseTag::Lift);
                b.hold(cfg.pat_hold, press, PhaseTag::Pat);
                b.move_to(above(p), cfg.descend_speed, zero, PhaseTag::Lift);
            }
        }
    }
    Ok(MotionPrimitive {
        task,
        points: b.points,
    })
}

fn group_by_strip(pts: &[(Vec3, usize)]) -> Vec<Vec<Vec3>> {
    let mut out: Vec<Vec<Vec3>> = Vec::new();
    let mut current = None;
    for &(p, s) in pts {
        if current != Some(s) {
            out.push(Vec::new());
            current = Some(s);
        }
        if let Some(last) = out.last_mut() {
            last.push(p);
        }
    }
    out
}

/// Fraction of region pixels swept by the bottom plate while the primitive
/// is pressing (stroke and pat points), by projecting the plate corners.
pub fn sweep_coverage(
    region: &Region,
    primitive: &MotionPrimitive,
    camera: &CameraModel,
    tool: &ToolFootprint,
    rest_length: f64,
) -> f64 {
    let total = region.count();
    if total == 0 {
        return 1.0;
    }
    let mut hit = vec![false; region.width * region.height];
    let (hw, hl) = (tool.width / 2.0, tool.length / 2.0);
    for p in primitive
        .points
        .iter()
        .filter(|p| matches!(p.phase, PhaseTag::Stroke | PhaseTag::Pat))
    {
        let mut lo = (f64::INFINITY, f64::INFINITY);
        let mut hi = (f64::NEG_INFINITY, f64::NEG_INFINITY);
        for (x, y) in [(-hw, -hl), (hw, -hl), (hw, hl), (-hw, hl)] {
            let corner = p.pose.transform_point(&Vec3::new(x, y, rest_length));
            if let Some((u, v, _)) = camera.project(&corner) {
                lo = (lo.0.min(u), lo.1.min(v));
                hi = (hi.0.max(u), hi.1.max(v));
            }
        }
        if !lo.0.is_finite() {
            continue;
        }
        let u0 = libm::ceil(lo.0 - 0.5).max(0.0) as usize;
        let v0 = libm::ceil(lo.1 - 0.5).max(0.0) as usize;
        let u1 = (libm::floor(hi.0 + 0.5).max(-1.0) as i64).min(region.width as i64 - 1);
        let v1 = (libm::floor(hi.1 + 0.5).max(-1.0) as i64).min(region.height as i64 - 1);
        for v in v0 as i64..=v1 {
            for u in u0 as i64..=u1 {
                hit[v as usize * region.width + u as usize] = true;
            }
        }
    }
    let covered = region
        .pixels
        .iter()
        .zip(&hit)
        .filter(|(&r, &h)| r && h)
        .count();
    covered as f64 / total as f64
}
