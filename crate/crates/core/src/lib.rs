//! Perception, motion planning, compliance control and closed-loop simulation
//! for robot-assisted bed bathing.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, configuration
//! parsing and the command line live in the `bathsim` crate.

#![no_std]
// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod config;
pub mod controller;
pub mod geometry;
pub mod perception;
pub mod planner;
pub mod rng;
pub mod robot;
pub mod sim;
pub mod tool;

pub use geometry::{Pose6, PoseError, Vec3, Vec6, Vec7, Wrench};

/// Task a controller gain set or motion primitive belongs to.
#[derive(
    Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize,
)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Wash,
    Rinse,
    Dry,
    FreeMotion,
}

impl TaskKind {
    pub const PHASES: [TaskKind; 3] = [TaskKind::Wash, TaskKind::Rinse, TaskKind::Dry];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Wash => "wash",
            TaskKind::Rinse => "rinse",
            TaskKind::Dry => "dry",
            TaskKind::FreeMotion => "free_motion",
        }
    }

    pub fn from_name(s: &str) -> Option<TaskKind> {
        match s {
            "wash" => Some(TaskKind::Wash),
            "rinse" => Some(TaskKind::Rinse),
            "dry" => Some(TaskKind::Dry),
            "free_motion" => Some(TaskKind::FreeMotion),
            _ => None,
        }
    }
}
