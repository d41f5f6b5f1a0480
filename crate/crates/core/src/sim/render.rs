use serde::{Deserialize, Serialize};

use super::surface::{CellState, LimbSurface, BED_TEMPERATURE};
use crate::perception::{
    celsius_to_ck, DepthImage, RgbImage, SegMask, ThermalImage, LABEL_BACKGROUND, LABEL_DRY,
    LABEL_SOAP, LABEL_WATER, SKIN_TONES,
};
use crate::planner::CameraModel;
use crate::rng::XorShift64Star;

pub const BED_COLOR: [u8; 3] = [120, 150, 180];
pub const FROTH_COLOR: [f64; 3] = [245.0, 245.0, 242.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderParams {
    pub width: usize,
    pub height: usize,
    /// skin tone preset, 1 (lightest) to 6
    pub tone: usize,
    /// σ of additive RGB noise in 8-bit levels (0 disables)
    pub rgb_noise: f64,
    /// σ of additive thermal noise in °C (0 disables)
    pub thermal_noise: f64,
    pub seed: u64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            width: 96,
            height: 176,
            tone: 3,
            rgb_noise: 0.0,
            thermal_noise: 0.0,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedScene {
    pub rgb: RgbImage,
    pub thermal: ThermalImage,
    pub depth: DepthImage,
    pub truth: SegMask,
}

pub fn tone_rgb(tone: usize) -> [u8; 3] {
    SKIN_TONES[tone.clamp(1, SKIN_TONES.len()) - 1]
}

/// Albedo of skin in the given state.
pub fn skin_color(tone: [u8; 3], state: CellState) -> [u8; 3] {
    let t = tone.map(f64::from);
    let c = match state {
        CellState::Dry => t,
        CellState::Wet => t.map(|v| 0.9 * v),
        CellState::Soapy => [0, 1, 2].map(|i| 0.9 * FROTH_COLOR[i] + 0.1 * t[i]),
    };
    c.map(|v| libm::round(v).clamp(0.0, 255.0) as u8)
}

fn label_for(state: CellState) -> u8 {
    match state {
        CellState::Dry => LABEL_DRY,
        CellState::Wet => LABEL_WATER,
        CellState::Soapy => LABEL_SOAP,
    }
}

/// Ray-casts the limb and bed from `camera`, producing registered RGB,
/// thermal, depth and ground-truth label images. Pixels that see neither
/// keep zero depth and background labels.
pub fn render_rgbt(
    surface: &LimbSurface,
    camera: &CameraModel,
    params: &RenderParams,
) -> RenderedScene {
    let (w, h) = (params.width, params.height);
    let mut rgb = RgbImage::new(w, h);
    let mut thermal = ThermalImage::filled(w, h, BED_TEMPERATURE);
    let mut depth = DepthImage::new(w, h);
    let mut truth = SegMask::new(w, h);
    let mut rng = XorShift64Star::new(params.seed);
    let tone = tone_rgb(params.tone);
    let origin = camera.pose.position;
    let forward = camera.pose.rotate(&crate::geometry::Vec3::z());
    let bed = surface.bed_plane();

    for v in 0..h {
        for u in 0..w {
            let ray = camera.ray(u as f64, v as f64);
            let limb_t = surface.capsule_entry(&origin, &ray).filter(|&t| t > 0.0);
            let bed_t = bed
                .and_then(|b| crate::tool::ContactSurface::gap_along(&b, &origin, &ray))
                .filter(|&t| t > 0.0);
            let (color, temp, label, t) = match (limb_t, bed_t) {
                (Some(lt), bt) if bt.is_none_or(|b| lt <= b) => {
                    let cell = surface.cells[surface.query(&(origin + ray * lt)).cell];
                    (
                        skin_color(tone, cell.state),
                        cell.temperature,
                        label_for(cell.state),
                        lt,
                    )
                }
                (_, Some(bt)) => (BED_COLOR, BED_TEMPERATURE, LABEL_BACKGROUND, bt),
                _ => (BED_COLOR, BED_TEMPERATURE, LABEL_BACKGROUND, 0.0),
            };
            let color = if params.rgb_noise > 0.0 {
                color.map(|c| {
                    libm::round(c as f64 + rng.gaussian(0.0, params.rgb_noise)).clamp(0.0, 255.0)
                        as u8
                })
            } else {
                color
            };
            let temp = if params.thermal_noise > 0.0 {
                temp + rng.gaussian(0.0, params.thermal_noise)
            } else {
                temp
            };
            rgb.set(u, v, color);
            thermal.data[v * w + u] = celsius_to_ck(temp);
            truth.set(u, v, label);
            if t > 0.0 {
                depth.set_m(u, v, t * ray.dot(&forward));
            }
        }
    }
    RenderedScene {
        rgb,
        thermal,
        depth,
        truth,
    }
}
