//! Synthetic labeled scenes spanning skin tone, fluid coverage and camera
//! viewpoint.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::render::{render_rgbt, RenderParams, RenderedScene};
use super::surface::{Cell, CellState, LimbSurface};
use super::trial::sub_seed;
use crate::config::{CameraConfig, LimbConfig};
use crate::geometry::{rot_x, Pose6, Vec3};
use crate::planner::CameraModel;
use crate::rng::XorShift64Star;

pub const CAMERA_PRESETS: usize = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coverage {
    None,
    PartialSoap,
    PartialWater,
    FullSoap,
    FullWater,
}

impl Coverage {
    pub const ALL: [Coverage; 5] = [
        Coverage::None,
        Coverage::PartialSoap,
        Coverage::PartialWater,
        Coverage::FullSoap,
        Coverage::FullWater,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Coverage::None => "none",
            Coverage::PartialSoap => "partial_soap",
            Coverage::PartialWater => "partial_water",
            Coverage::FullSoap => "full_soap",
            Coverage::FullWater => "full_water",
        }
    }

    pub fn from_name(s: &str) -> Option<Coverage> {
        Coverage::ALL.into_iter().find(|c| c.name() == s)
    }

    fn fluid(self) -> Option<(CellState, f64, bool)> {
        match self {
            Coverage::None => None,
            Coverage::PartialSoap => Some((CellState::Soapy, 1.0, true)),
            Coverage::PartialWater => Some((CellState::Wet, 0.8, true)),
            Coverage::FullSoap => Some((CellState::Soapy, 1.0, false)),
            Coverage::FullWater => Some((CellState::Wet, 0.8, false)),
        }
    }
}

/// Position of one scene on the variation grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SceneSpec {
    /// 1..=6
    pub tone: usize,
    pub coverage: Coverage,
    /// 0..CAMERA_PRESETS
    pub camera_pose: usize,
}

/// Scene `index` of a grid cycling tones fastest, then coverage, then
/// camera pose.
pub fn scene_spec(index: usize, tones: &[usize]) -> SceneSpec {
    let nt = tones.len().max(1);
    let nc = Coverage::ALL.len();
    SceneSpec {
        tone: tones.get(index % nt).copied().unwrap_or(3),
        coverage: Coverage::ALL[(index / nt) % nc],
        camera_pose: (index / (nt * nc)) % CAMERA_PRESETS,
    }
}

/// One of six overhead viewpoints around the default camera.
pub fn camera_preset(base: &CameraConfig, preset: usize) -> CameraModel {
    let deg = core::f64::consts::PI / 180.0;
    let (shift, height, tilt_x, tilt_y, yaw) = match preset % CAMERA_PRESETS {
        0 => ([0.0, 0.0], 0.0, 0.0, 0.0, 0.0),
        1 => ([0.0, 0.0], 0.05, 0.0, 0.0, 0.0),
        2 => ([0.02, 0.0], 0.0, 0.0, 3.0, 0.0),
        3 => ([-0.02, 0.0], 0.0, 0.0, -3.0, 0.0),
        4 => ([0.0, 0.015], 0.02, 3.0, 0.0, 0.0),
        _ => ([0.0, 0.0], 0.03, 0.0, 0.0, 5.0),
    };
    let mut cam = base.model();
    cam.pose.position += Vec3::new(shift[0], shift[1], height);
    let tilt = UnitQuaternion::from_axis_angle(&Vector3::y_axis(), tilt_y * deg)
        * UnitQuaternion::from_axis_angle(&Vector3::x_axis(), tilt_x * deg)
        * UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw * deg);
    cam.pose.orientation = tilt * cam.pose.orientation;
    cam
}

/// Limb with the scene's fluid coverage on its exposed cells. Partial
/// coverage is a random axial band over a third to two thirds of the limb.
pub fn scene_surface(
    limb: &LimbConfig,
    coverage: Coverage,
    rng: &mut XorShift64Star,
) -> LimbSurface {
    let base = LimbConfig {
        initial_state: CellState::Dry,
        ..limb.clone()
    };
    let mut s = base.build();
    let Some((state, amount, partial)) = coverage.fluid() else {
        return s;
    };
    let (lo, hi) = if partial {
        let n = s.u_cells as u64;
        let len = (n / 3 + rng.below(n / 3 + 1)).max(1);
        let lo = rng.below(n - len + 1);
        (lo as usize, (lo + len) as usize)
    } else {
        (0, s.u_cells)
    };
    let cell = Cell::with_state(state, amount);
    for i in 0..s.cells.len() {
        let (u, _) = s.uv(i);
        if u >= lo && u < hi && base.is_exposed(&s, i) {
            s.cells[i] = cell;
        }
    }
    s
}

/// Renders scene `index` of the grid. Every scene draws from its own random
/// stream so scenes can be generated in any order.
pub fn generate_scene(
    limb: &LimbConfig,
    camera: &CameraConfig,
    spec: &SceneSpec,
    seed: u64,
    index: usize,
    noise: Option<(f64, f64)>,
) -> RenderedScene {
    let mut rng = XorShift64Star::new(sub_seed(seed, 1000 + index as u64));
    let surface = scene_surface(limb, spec.coverage, &mut rng);
    let cam = camera_preset(camera, spec.camera_pose);
    let (rgb_noise, thermal_noise) = noise.unwrap_or((0.0, 0.0));
    let params = RenderParams {
        width: camera.width,
        height: camera.height,
        tone: spec.tone,
        rgb_noise,
        thermal_noise,
        seed: rng.next_u64(),
    };
    render_rgbt(&surface, &cam, &params)
}

/// Default overhead camera pose.
pub fn overhead(height: f64) -> Pose6 {
    Pose6 {
        position: Vec3::new(0.5, 0.0, height),
        orientation: rot_x(core::f64::consts::PI),
    }
}
