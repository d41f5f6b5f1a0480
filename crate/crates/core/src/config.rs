//! Scenario configuration: every tunable of a closed-loop trial in one
//! serde tree. Unknown keys are rejected and missing keys take the defaults
//! below.

use alloc::string::String;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerParams, GainSchedule, ObserverParams};
use crate::geometry::{rot_x, Pose6, PoseConfig, Vec3};
use crate::perception::SegParams;
use crate::planner::{CameraModel, PrimitiveConfig, ToolFootprint};
use crate::robot::{ChainConfig, DynamicsParams, JointLimits, KinematicChain, RobotModel, JOINTS};
use crate::sim::{CellState, ForceSensorModel, LimbSurface, RenderParams, TreatmentRules};
use crate::tool::ToolModel;

pub const SCHEMA_VERSION: &str = "1";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unsupported schema version `{0}` (expected `{SCHEMA_VERSION}`)")]
    Schema(String),
    #[error("invalid `{section}`: {reason}")]
    Invalid {
        section: &'static str,
        reason: &'static str,
    },
}

fn invalid(section: &'static str) -> impl Fn(&'static str) -> ConfigError {
    move |reason| ConfigError::Invalid { section, reason }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RobotConfig {
    pub chain: ChainConfig,
    pub dynamics: DynamicsParams,
    pub limits: JointLimits,
    /// tool-mount pose the arm starts at
    pub home: PoseConfig,
    /// inverse-kinematics starting guess for `home`
    pub ik_seed: [f64; JOINTS],
}

impl Default for RobotConfig {
    fn default() -> Self {
        RobotConfig {
            chain: ChainConfig::default(),
            dynamics: DynamicsParams::default(),
            limits: JointLimits::default(),
            home: PoseConfig {
                position: [0.5, 0.0, 0.25],
                orientation: [0.0, 1.0, 0.0, 0.0],
            },
            ik_seed: [0.0, 0.6, 0.0, -1.6, 0.0, -1.0, 0.0],
        }
    }
}

impl RobotConfig {
    pub fn model(&self) -> RobotModel {
        RobotModel {
            chain: KinematicChain::from(&self.chain),
            dynamics: self.dynamics.clone(),
            limits: self.limits.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControllerConfig {
    pub gains: GainSchedule,
    pub params: ControllerParams,
    pub observer: ObserverParams,
    pub observer_enabled: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            gains: GainSchedule::default(),
            params: ControllerParams::default(),
            observer: ObserverParams::default(),
            observer_enabled: true,
        }
    }
}

/// Capsule limb resting on the bed, and the skin state it starts in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LimbConfig {
    pub start: [f64; 3],
    pub end: [f64; 3],
    pub radius: f64,
    pub u_cells: usize,
    pub v_cells: usize,
    pub bed_height: Option<f64>,
    /// cells whose outward normal has at least this upward component face
    /// the camera and the tool
    pub exposed_normal_z: f64,
    /// state of the exposed cells at the start
    pub initial_state: CellState,
    pub initial_amount: f64,
}

impl Default for LimbConfig {
    fn default() -> Self {
        LimbConfig {
            start: [0.5, -0.125, 0.04],
            end: [0.5, 0.125, 0.04],
            radius: 0.04,
            u_cells: 25,
            v_cells: 180,
            bed_height: Some(0.0),
            exposed_normal_z: 0.5,
            initial_state: CellState::Dry,
            initial_amount: 0.0,
        }
    }
}

impl LimbConfig {
    pub fn build(&self) -> LimbSurface {
        let mut s = LimbSurface::new(
            Vec3::from(self.start),
            Vec3::from(self.end),
            self.radius,
            self.u_cells,
            self.v_cells,
        );
        if let Some(z) = self.bed_height {
            s = s.with_bed(z);
        }
        if self.initial_state != CellState::Dry {
            let cell = crate::sim::Cell::with_state(self.initial_state, self.initial_amount);
            for i in 0..s.cells.len() {
                if self.is_exposed(&s, i) {
                    s.cells[i] = cell;
                }
            }
        }
        s
    }

    pub fn is_exposed(&self, surface: &LimbSurface, index: usize) -> bool {
        surface.cell_normal(index).z >= self.exposed_normal_z
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    /// camera-to-base pose; camera z is the viewing direction
    pub pose: PoseConfig,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            fx: 200.0,
            fy: 200.0,
            cx: 47.5,
            cy: 87.5,
            width: 96,
            height: 176,
            pose: Pose6 {
                position: Vec3::new(0.5, 0.0, 0.55),
                orientation: rot_x(core::f64::consts::PI),
            }
            .into(),
        }
    }
}

impl CameraConfig {
    pub fn model(&self) -> CameraModel {
        CameraModel {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            pose: self.pose.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    /// skin tone preset 1..=6
    pub tone: usize,
    pub rgb_noise: f64,
    pub thermal_noise: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            tone: 3,
            rgb_noise: 3.0,
            thermal_noise: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimingConfig {
    /// control period (s)
    pub dt: f64,
    /// control ticks per trajectory point
    pub ticks_per_point: usize,
    /// control ticks between fluid updates
    pub spread_period_ticks: usize,
    /// segmentation dead time logged before each phase (s)
    pub perception_delay: f64,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            dt: 0.001,
            ticks_per_point: 14,
            spread_period_ticks: 10,
            perception_delay: 3.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    /// cells holding at least this much soap or water count as residual
    pub residual_threshold: f64,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            residual_threshold: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub schema_version: String,
    pub seed: u64,
    pub robot: RobotConfig,
    pub controller: ControllerConfig,
    pub tool: ToolModel,
    pub limb: LimbConfig,
    pub camera: CameraConfig,
    pub render: RenderConfig,
    pub segmentation: SegParams,
    pub primitives: PrimitiveConfig,
    pub treatment: TreatmentRules,
    pub sensor: ForceSensorModel,
    pub timing: TimingConfig,
    pub report: ReportConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            schema_version: SCHEMA_VERSION.into(),
            seed: 7,
            robot: RobotConfig::default(),
            controller: ControllerConfig::default(),
            tool: ToolModel::default(),
            limb: LimbConfig::default(),
            camera: CameraConfig::default(),
            render: RenderConfig::default(),
            segmentation: SegParams::default(),
            primitives: PrimitiveConfig::default(),
            treatment: TreatmentRules::default(),
            sensor: ForceSensorModel::default(),
            timing: TimingConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema_version.clone()));
        }
        let lim = &self.robot.limits;
        if (0..JOINTS).any(|i| !(lim.q_min[i] < lim.q_max[i] && lim.torque[i] > 0.0)) {
            return Err(invalid("robot.limits")(
                "need q_min < q_max and positive torque limits",
            ));
        }
        if self.robot.dynamics.inertia.iter().any(|&m| !(m > 0.0)) {
            return Err(invalid("robot.dynamics")("joint inertia must be positive"));
        }
        self.controller.gains.validate().map_err(|_| {
            invalid("controller.gains")(
                "every task needs finite non-negative gains and dry must be softest along z",
            )
        })?;
        self.tool.validate().map_err(invalid("tool"))?;
        let limb = &self.limb;
        if !(limb.radius > 0.0 && limb.u_cells > 0 && limb.v_cells >= 3) {
            return Err(invalid("limb")(
                "need a positive radius and a non-empty cell grid",
            ));
        }
        if !(0.0..=1.0).contains(&limb.initial_amount) {
            return Err(invalid("limb")("initial amount must lie in [0, 1]"));
        }
        let cam = &self.camera;
        if !(cam.fx > 0.0 && cam.fy > 0.0 && cam.width > 0 && cam.height > 0) {
            return Err(invalid("camera")(
                "focal lengths and image size must be positive",
            ));
        }
        if !(1..=6).contains(&self.render.tone) {
            return Err(invalid("render")("tone must be between 1 and 6"));
        }
        if self.render.rgb_noise < 0.0 || self.render.thermal_noise < 0.0 {
            return Err(invalid("render")("noise levels must be non-negative"));
        }
        self.primitives
            .validate()
            .map_err(|_| invalid("primitives")("task forces must stay below the 20 N cap"))?;
        let p = &self.primitives;
        if [
            p.stroke_speed,
            p.transit_speed,
            p.descend_speed,
            p.turn_rate,
            p.rate_hz,
        ]
        .iter()
        .any(|&v| !(v > 0.0))
        {
            return Err(invalid("primitives")("speeds and rates must be positive"));
        }
        self.treatment.validate().map_err(invalid("treatment"))?;
        if !(self.sensor.noise_sigma >= 0.0) {
            return Err(invalid("sensor")("noise sigma must be non-negative"));
        }
        let t = &self.timing;
        if !(t.dt > 0.0 && t.dt <= 0.01 && t.ticks_per_point > 0 && t.spread_period_ticks > 0) {
            return Err(invalid("timing")(
                "need 0 < dt <= 10 ms and positive tick counts",
            ));
        }
        Ok(())
    }

    /// Primitive settings with the tool geometry taken from the tool model.
    pub fn primitive_config(&self) -> PrimitiveConfig {
        PrimitiveConfig {
            tool_rest_length: self.tool.rest_length,
            tool_stiffness: self.tool.total_stiffness(),
            ..self.primitives.clone()
        }
    }

    pub fn footprint(&self) -> ToolFootprint {
        ToolFootprint {
            length: self.tool.plate_length,
            width: self.tool.plate_width,
        }
    }

    pub fn render_params(&self, seed: u64) -> RenderParams {
        RenderParams {
            width: self.camera.width,
            height: self.camera.height,
            tone: self.render.tone,
            rgb_noise: self.render.rgb_noise,
            thermal_noise: self.render.thermal_noise,
            seed,
        }
    }
}
