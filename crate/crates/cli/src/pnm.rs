//! Binary PNM images: P6 (8-bit RGB) and P5 (8- or 16-bit gray, big-endian).

use std::fs;
use std::io;
use std::path::Path;

use bathsim_core::perception::{DepthImage, RgbImage, SegMask, ThermalImage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PnmError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a binary PNM file (magic {0:?})")]
    Magic(String),
    #[error("malformed header: {0}")]
    Header(&'static str),
    #[error("expected {expected} bytes of pixel data, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("expected {expected}, found {found}")]
    Kind {
        expected: &'static str,
        found: String,
    },
    #[error(transparent)]
    Image(#[from] bathsim_core::perception::PerceptionError),
}

/// Decoded samples, widened to `u16`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pnm {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

impl Pnm {
    pub fn encode(&self) -> Vec<u8> {
        let magic = if self.channels == 3 { "P6" } else { "P5" };
        let mut out =
            format!("{magic}\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval > 255 {
            for s in &self.samples {
                out.extend_from_slice(&s.to_be_bytes());
            }
        } else {
            out.extend(self.samples.iter().map(|&s| s as u8));
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Pnm, PnmError> {
        let mut pos = 0;
        let magic = token(bytes, &mut pos)?;
        let channels = match magic.as_str() {
            "P6" => 3,
            "P5" => 1,
            _ => return Err(PnmError::Magic(magic)),
        };
        let width = number(bytes, &mut pos)?;
        let height = number(bytes, &mut pos)?;
        let maxval = number(bytes, &mut pos)?;
        if !(1..=65535).contains(&maxval) {
            return Err(PnmError::Header("maxval must be in 1..=65535"));
        }
        // exactly one whitespace byte separates the header from the raster
        if bytes.get(pos).is_none_or(|b| !b.is_ascii_whitespace()) {
            return Err(PnmError::Header("missing whitespace after maxval"));
        }
        pos += 1;
        let wide = maxval > 255;
        let count = width * height * channels;
        let expected = count * if wide { 2 } else { 1 };
        let raster = &bytes[pos..];
        if raster.len() < expected {
            return Err(PnmError::Truncated {
                expected,
                found: raster.len(),
            });
        }
        let samples = if wide {
            raster[..expected]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        } else {
            raster[..expected].iter().map(|&b| b as u16).collect()
        };
        Ok(Pnm {
            channels,
            width,
            height,
            maxval: maxval as u16,
            samples,
        })
    }

    pub fn read(path: &Path) -> Result<Pnm, PnmError> {
        Pnm::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<(), PnmError> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    fn expect(&self, channels: usize, wide: bool, what: &'static str) -> Result<(), PnmError> {
        if self.channels != channels || (self.maxval > 255) != wide {
            return Err(PnmError::Kind {
                expected: what,
                found: format!("{} channel(s), maxval {}", self.channels, self.maxval),
            });
        }
        Ok(())
    }
}

fn skip_space_and_comments(bytes: &[u8], pos: &mut usize) {
    while let Some(&b) = bytes.get(*pos) {
        if b == b'#' {
            while bytes.get(*pos).is_some_and(|&c| c != b'\n') {
                *pos += 1;
            }
        } else if b.is_ascii_whitespace() {
            *pos += 1;
        } else {
            break;
        }
    }
}

fn token(bytes: &[u8], pos: &mut usize) -> Result<String, PnmError> {
    skip_space_and_comments(bytes, pos);
    let start = *pos;
    while bytes
        .get(*pos)
        .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
    {
        *pos += 1;
    }
    if start == *pos {
        return Err(PnmError::Header("unexpected end of header"));
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn number(bytes: &[u8], pos: &mut usize) -> Result<usize, PnmError> {
    token(bytes, pos)?
        .parse()
        .map_err(|_| PnmError::Header("expected a decimal number"))
}

pub fn rgb_to_pnm(img: &RgbImage) -> Pnm {
    Pnm {
        channels: 3,
        width: img.width,
        height: img.height,
        maxval: 255,
        samples: img.data.iter().map(|&b| b as u16).collect(),
    }
}

/// Thermal images are stored as 16-bit centi-kelvin.
pub fn thermal_to_pnm(img: &ThermalImage) -> Pnm {
    Pnm {
        channels: 1,
        width: img.width,
        height: img.height,
        maxval: 65535,
        samples: img.data.clone(),
    }
}

/// Depth images are stored as 16-bit millimeters, 0 for no return.
pub fn depth_to_pnm(img: &DepthImage) -> Pnm {
    Pnm {
        channels: 1,
        width: img.width,
        height: img.height,
        maxval: 65535,
        samples: img.data.clone(),
    }
}

/// Masks are 8-bit gray holding the label values 0..=3.
pub fn mask_to_pnm(mask: &SegMask) -> Pnm {
    Pnm {
        channels: 1,
        width: mask.width,
        height: mask.height,
        maxval: 255,
        samples: mask.labels.iter().map(|&l| l as u16).collect(),
    }
}

pub fn read_rgb(path: &Path) -> Result<RgbImage, PnmError> {
    let p = Pnm::read(path)?;
    p.expect(3, false, "8-bit P6")?;
    Ok(RgbImage::from_raw(
        p.width,
        p.height,
        p.samples.iter().map(|&s| s as u8).collect(),
    )?)
}

pub fn read_thermal(path: &Path) -> Result<ThermalImage, PnmError> {
    let p = Pnm::read(path)?;
    p.expect(1, true, "16-bit P5")?;
    Ok(ThermalImage::from_raw(p.width, p.height, p.samples)?)
}

pub fn read_depth(path: &Path) -> Result<DepthImage, PnmError> {
    let p = Pnm::read(path)?;
    p.expect(1, true, "16-bit P5")?;
    Ok(DepthImage::from_raw(p.width, p.height, p.samples)?)
}

pub fn read_mask(path: &Path) -> Result<SegMask, PnmError> {
    let p = Pnm::read(path)?;
    p.expect(1, false, "8-bit P5")?;
    Ok(SegMask::from_raw(
        p.width,
        p.height,
        p.samples.iter().map(|&s| s as u8).collect(),
    )?)
}
