//! From a segmentation mask and depth image to timed force-position motion
//! primitives for washing, rinsing and drying.

mod primitive;
mod region;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Pose6, Vec3};
use crate::perception::DepthImage;

pub use primitive::{generate_primitive, sweep_coverage, PrimitiveConfig};
pub use region::{plan_waypoints, target_region, Region};

/// Largest desired force magnitude any primitive may carry (N).
pub const FORCE_CAP: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("no valid depth near waypoint {index} at pixel ({u}, {v})")]
    NoDepth { index: usize, u: usize, v: usize },
    #[error("primitive needs at least one 3D waypoint")]
    NoWaypoints,
    #[error("desired force {0} N exceeds the safety cap")]
    ForceCap(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseTag {
    Approach,
    Stroke,
    Lift,
    Pat,
}

impl PhaseTag {
    pub fn name(self) -> &'static str {
        match self {
            PhaseTag::Approach => "approach",
            PhaseTag::Stroke => "stroke",
            PhaseTag::Lift => "lift",
            PhaseTag::Pat => "pat",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub pose: Pose6,
    /// force the tool should apply to the skin, base frame (N)
    pub force: Vec3,
    pub phase: PhaseTag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionPrimitive {
    pub task: crate::TaskKind,
    pub points: Vec<TrajectoryPoint>,
}

impl MotionPrimitive {
    pub fn empty(task: crate::TaskKind) -> Self {
        MotionPrimitive {
            task,
            points: Vec::new(),
        }
    }

    pub fn duration(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }
}

/// Bottom-plate planar size in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolFootprint {
    /// along the stroke
    pub length: f64,
    /// across the stroke
    pub width: f64,
}

/// Footprint in image pixels at a given viewing depth.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelFootprint {
    /// along image rows (stroke direction)
    pub length: f64,
    /// along image columns
    pub width: f64,
}

impl ToolFootprint {
    pub fn to_pixels(&self, camera: &CameraModel, depth: f64) -> PixelFootprint {
        PixelFootprint {
            length: self.length * camera.fy / depth,
            width: self.width * camera.fx / depth,
        }
    }
}

/// Pinhole camera; `pose` maps camera coordinates to the robot base.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub pose: Pose6,
}

impl CameraModel {
    pub fn back_project(&self, u: f64, v: f64, z: f64) -> Vec3 {
        let local = Vec3::new((u - self.cx) * z / self.fx, (v - self.cy) * z / self.fy, z);
        self.pose.transform_point(&local)
    }

    /// `(u, v, depth)` of a base-frame point; `None` behind the camera.
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64, f64)> {
        let c = self.pose.inverse().transform_point(p);
        if c.z <= 0.0 {
            return None;
        }
        Some((
            self.fx * c.x / c.z + self.cx,
            self.fy * c.y / c.z + self.cy,
            c.z,
        ))
    }

    /// Base-frame direction of the ray through pixel `(u, v)`, unit length.
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        self.pose
            .rotate(&Vec3::new(
                (u - self.cx) / self.fx,
                (v - self.cy) / self.fy,
                1.0,
            ))
            .normalize()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Waypoint {
    /// `(column, row)`
    pub pixel: (usize, usize),
    /// strip the waypoint belongs to, left to right
    pub strip: usize,
    pub point: Option<Vec3>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct WaypointSet {
    pub waypoints: Vec<Waypoint>,
}

impl WaypointSet {
    pub fn is_empty(&self) -> bool {
        self.waypoints.is_empty()
    }

    pub fn len(&self) -> usize {
        self.waypoints.len()
    }

    pub fn points(&self) -> Vec<Vec3> {
        self.waypoints.iter().filter_map(|w| w.point).collect()
    }
}

/// Back-projects every waypoint through its depth sample. A missing sample
/// is replaced by the median of the valid samples in its 5×5 neighborhood.
pub fn lift_to_3d(
    waypoints: &WaypointSet,
    depth: &DepthImage,
    camera: &CameraModel,
) -> Result<WaypointSet, PlanError> {
    let mut out = waypoints.clone();
    for (index, w) in out.waypoints.iter_mut().enumerate() {
        let (u, v) = w.pixel;
        let z = match depth.get_m(u, v) {
            Some(z) => z,
            None => neighborhood_median(depth, u, v).ok_or(PlanError::NoDepth { index, u, v })?,
        };
        w.point = Some(camera.back_project(u as f64, v as f64, z));
    }
    Ok(out)
}

fn neighborhood_median(depth: &DepthImage, u: usize, v: usize) -> Option<f64> {
    let mut vals: Vec<u16> = Vec::with_capacity(25);
    for y in v.saturating_sub(2)..=(v + 2).min(depth.height.saturating_sub(1)) {
        for x in u.saturating_sub(2)..=(u + 2).min(depth.width.saturating_sub(1)) {
            let d = depth.data[y * depth.width + x];
            if d != 0 {
                vals.push(d);
            }
        }
    }
    if vals.is_empty() {
        return None;
    }
    vals.sort_unstable();
    let n = vals.len();
    let mm = if n % 2 == 1 {
        vals[n / 2] as f64
    } else {
        (vals[n / 2 - 1] as f64 + vals[n / 2] as f64) / 2.0
    };
    Some(mm / 1000.0)
}
