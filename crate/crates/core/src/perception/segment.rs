use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{
    ck_to_celsius, PerceptionError, RgbImage, SegMask, ThermalImage, CLASS_COUNT, LABEL_BACKGROUND,
    LABEL_DRY, LABEL_SOAP, LABEL_WATER,
};

/// Thresholds of the rule-based segmenter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SegParams {
    /// minimum R−G and G−B steps for the skin chroma test (8-bit levels)
    pub chroma_margin: f64,
    /// accepted R/B ratio band, spanning the six reference tones
    pub red_blue_ratio: [f64; 2],
    /// HSV value above which a desaturated pixel is froth
    pub soap_brightness: f64,
    /// HSV saturation below which a bright pixel is froth
    pub soap_saturation: f64,
    /// °C
    pub water_band: [f64; 2],
    /// °C; also the thermal skin gate
    pub dry_band: [f64; 2],
    pub smoothing: bool,
}

impl Default for SegParams {
    fn default() -> Self {
        SegParams {
            chroma_margin: 2.0,
            red_blue_ratio: [1.15, 3.0],
            soap_brightness: 0.85,
            soap_saturation: 0.15,
            water_band: [16.0, 26.0],
            dry_band: [30.0, 40.0],
            smoothing: true,
        }
    }
}

fn hsv_value_saturation(rgb: [u8; 3]) -> (f64, f64) {
    let max = rgb.iter().copied().max().unwrap_or(0) as f64;
    let min = rgb.iter().copied().min().unwrap_or(0) as f64;
    let sat = if max > 0.0 { (max - min) / max } else { 0.0 };
    (max / 255.0, sat)
}

fn in_band(v: f64, band: [f64; 2]) -> bool {
    v >= band[0] && v <= band[1]
}

fn band_distance(v: f64, band: [f64; 2]) -> f64 {
    if v < band[0] {
        band[0] - v
    } else if v > band[1] {
        v - band[1]
    } else {
        0.0
    }
}

/// Per-pixel rule before smoothing.
pub(crate) fn classify_pixel(rgb: [u8; 3], celsius: f64, p: &SegParams) -> u8 {
    let [r, g, b] = rgb.map(f64::from);
    let chroma = r - g >= p.chroma_margin
        && g - b >= p.chroma_margin
        && b > 0.0
        && in_band(r / b, p.red_blue_ratio);
    let (value, sat) = hsv_value_saturation(rgb);
    let froth = value > p.soap_brightness && sat < p.soap_saturation;
    let warm = in_band(celsius, p.dry_band);
    if !(chroma || froth || warm) {
        return LABEL_BACKGROUND;
    }
    // brightness test wins over temperature
    if froth {
        return LABEL_SOAP;
    }
    if in_band(celsius, p.water_band) {
        return LABEL_WATER;
    }
    if warm {
        return LABEL_DRY;
    }
    if band_distance(celsius, p.water_band) < band_distance(celsius, p.dry_band) {
        LABEL_WATER
    } else {
        LABEL_DRY
    }
}

/// One pass of 3×3 majority smoothing, clipped at the image border. A pixel
/// is relabeled only when its own label covers at most two window cells and
/// another label holds a strict majority, so speckle goes while region
/// corners stay put.
pub(crate) fn majority_smooth(mask: &SegMask) -> SegMask {
    let (w, h) = (mask.width, mask.height);
    let mut out = mask.clone();
    for y in 0..h {
        for x in 0..w {
            let mut counts = [0u8; CLASS_COUNT];
            let mut total = 0u8;
            for yy in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for xx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    counts[mask.get(xx, yy) as usize] += 1;
                    total += 1;
                }
            }
            let center = mask.get(x, y);
            if counts[center as usize] > 2 {
                continue;
            }
            if let Some(label) = counts.iter().position(|&c| 2 * c > total) {
                out.set(x, y, label as u8);
            }
        }
    }
    out
}

/// Labels every pixel as background, dry skin, water or soap from a
/// registered RGB and thermal pair.
pub fn segment_rgbt(
    rgb: &RgbImage,
    thermal: &ThermalImage,
    params: &SegParams,
) -> Result<SegMask, PerceptionError> {
    if rgb.width != thermal.width || rgb.height != thermal.height {
        return Err(PerceptionError::SizeMismatch(
            rgb.width,
            rgb.height,
            thermal.width,
            thermal.height,
        ));
    }
    let labels: Vec<u8> = rgb
        .data
        .chunks_exact(3)
        .zip(&thermal.data)
        .map(|(px, &ck)| classify_pixel([px[0], px[1], px[2]], ck_to_celsius(ck), params))
        .collect();
    let mask = SegMask {
        width: rgb.width,
        height: rgb.height,
        labels,
    };
    if params.smoothing && mask.width > 0 && mask.height > 0 {
        Ok(majority_smooth(&mask))
    } else {
        Ok(mask)
    }
}
