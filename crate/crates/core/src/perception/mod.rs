//! RGB-thermal images, the four-class skin segmenter and its evaluation
//! metrics.

mod metrics;
mod segment;

use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

pub use metrics::{iou, iou_counts, split_dataset, IouReport, Split};
pub use segment::{segment_rgbt, SegParams};

pub const LABEL_BACKGROUND: u8 = 0;
pub const LABEL_DRY: u8 = 1;
pub const LABEL_WATER: u8 = 2;
pub const LABEL_SOAP: u8 = 3;
pub const CLASS_COUNT: usize = 4;

/// Lowest and highest representable thermal sample (−50 °C, 100 °C).
pub const THERMAL_MIN_CK: u16 = 23_315;
pub const THERMAL_MAX_CK: u16 = 37_315;

/// Six reference skin tones, lightest to darkest.
pub const SKIN_TONES: [[u8; 3]; 6] = [
    [244, 208, 177],
    [231, 185, 151],
    [208, 156, 117],
    [176, 121, 84],
    [125, 82, 55],
    [78, 51, 36],
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerceptionError {
    #[error("image size mismatch: {0}x{1} vs {2}x{3}")]
    SizeMismatch(usize, usize, usize, usize),
    #[error("buffer holds {got} samples, {width}x{height} needs {expected}")]
    BadLength {
        width: usize,
        height: usize,
        expected: usize,
        got: usize,
    },
    #[error("label {0} outside 0..=3")]
    InvalidLabel(u8),
    #[error("thermal sample {0} outside the representable range")]
    ThermalOutOfRange(u16),
}

pub fn celsius_to_ck(c: f64) -> u16 {
    let ck = libm::round((c + 273.15) * 100.0);
    ck.clamp(THERMAL_MIN_CK as f64, THERMAL_MAX_CK as f64) as u16
}

pub fn ck_to_celsius(ck: u16) -> f64 {
    ck as f64 / 100.0 - 273.15
}

fn check_len(
    width: usize,
    height: usize,
    per_pixel: usize,
    got: usize,
) -> Result<(), PerceptionError> {
    let expected = width * height * per_pixel;
    if expected != got {
        return Err(PerceptionError::BadLength {
            width,
            height,
            expected,
            got,
        });
    }
    Ok(())
}

/// Row-major 8-bit RGB triples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, PerceptionError> {
        check_len(width, height, 3, data.len())?;
        Ok(RgbImage {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Row-major temperatures in centi-kelvin.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ThermalImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl ThermalImage {
    pub fn filled(width: usize, height: usize, celsius: f64) -> Self {
        ThermalImage {
            width,
            height,
            data: vec![celsius_to_ck(celsius); width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u16>) -> Result<Self, PerceptionError> {
        check_len(width, height, 1, data.len())?;
        if let Some(&bad) = data
            .iter()
            .find(|&&v| !(THERMAL_MIN_CK..=THERMAL_MAX_CK).contains(&v))
        {
            return Err(PerceptionError::ThermalOutOfRange(bad));
        }
        Ok(ThermalImage {
            width,
            height,
            data,
        })
    }

    pub fn celsius(&self, x: usize, y: usize) -> f64 {
        ck_to_celsius(self.data[y * self.width + x])
    }

    pub fn set_celsius(&mut self, x: usize, y: usize, c: f64) {
        self.data[y * self.width + x] = celsius_to_ck(c);
    }
}

/// Row-major depth in millimeters; 0 marks a missing sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u16>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize) -> Self {
        DepthImage {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, data: Vec<u16>) -> Result<Self, PerceptionError> {
        check_len(width, height, 1, data.len())?;
        Ok(DepthImage {
            width,
            height,
            data,
        })
    }

    pub fn get_m(&self, x: usize, y: usize) -> Option<f64> {
        match self.data[y * self.width + x] {
            0 => None,
            mm => Some(mm as f64 / 1000.0),
        }
    }

    pub fn set_m(&mut self, x: usize, y: usize, meters: f64) {
        self.data[y * self.width + x] =
            libm::round(meters * 1000.0).clamp(0.0, u16::MAX as f64) as u16;
    }
}

/// Row-major class labels in `0..=3`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SegMask {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl SegMask {
    pub fn new(width: usize, height: usize) -> Self {
        SegMask {
            width,
            height,
            labels: vec![LABEL_BACKGROUND; width * height],
        }
    }

    pub fn from_raw(width: usize, height: usize, labels: Vec<u8>) -> Result<Self, PerceptionError> {
        check_len(width, height, 1, labels.len())?;
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= CLASS_COUNT) {
            return Err(PerceptionError::InvalidLabel(bad));
        }
        Ok(SegMask {
            width,
            height,
            labels,
        })
    }

    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, label: u8) {
        self.labels[y * self.width + x] = label;
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }
}
