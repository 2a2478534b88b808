//! Interest-point detection (FAST, Harris, determinant of Hessian) and
//! 256-bit binary descriptors.

mod brief;
mod doh;
mod fast;
mod harris;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use brief::{describe, sampling_pattern, DescribeOutput, Descriptor, DESCRIPTOR_SEED, PATCH_RADIUS};
pub use doh::{detect_doh, doh_response_at, DOH_FILTER_SIZES};
pub use fast::{detect_fast, segment_test, CIRCLE_OFFSETS};
pub use harris::detect_harris;

use crate::raster::GrayImage;

pub const DEFAULT_FAST_THRESHOLD: f64 = 20.0 / 255.0;
pub const DEFAULT_HARRIS_K: f64 = 0.04;
pub const DEFAULT_HARRIS_REL_THRESHOLD: f64 = 0.01;
pub const DEFAULT_DOH_THRESHOLD: f64 = 0.0004;

/// Scale recorded for detectors without a scale axis.
pub const UNIT_SCALE: f64 = 1.2;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("image {width}x{height} is smaller than the {min}x{min} minimum")]
    ImageTooSmall { width: u32, height: u32, min: u32 },
    #[error("parameter {name} = {value} out of range")]
    BadParameter { name: &'static str, value: f64 },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Detector {
    Fast,
    Harris,
    Doh,
}

impl Detector {
    pub const ALL: [Detector; 3] = [Detector::Fast, Detector::Harris, Detector::Doh];
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Detector::Fast => "fast",
            Detector::Harris => "harris",
            Detector::Doh => "doh",
        })
    }
}

impl FromStr for Detector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fast" => Ok(Detector::Fast),
            "harris" => Ok(Detector::Harris),
            "doh" => Ok(Detector::Doh),
            other => Err(format!("unknown detector `{other}` (expected fast|harris|doh)")),
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub response: f64,
    pub scale: f64,
    pub detector: Detector,
}

/// Detector choice plus its parameters.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DetectorParams {
    pub detector: Detector,
    pub fast_threshold: f64,
    pub harris_k: f64,
    pub harris_rel_threshold: f64,
    pub doh_threshold: f64,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            detector: Detector::Doh,
            fast_threshold: DEFAULT_FAST_THRESHOLD,
            harris_k: DEFAULT_HARRIS_K,
            harris_rel_threshold: DEFAULT_HARRIS_REL_THRESHOLD,
            doh_threshold: DEFAULT_DOH_THRESHOLD,
        }
    }
}

impl DetectorParams {
    pub fn with_detector(self, detector: Detector) -> Self {
        Self { detector, ..self }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let check = |name, value: f64, ok: bool| {
            if ok {
                Ok(())
            } else {
                Err(FeatureError::BadParameter { name, value })
            }
        };
        let t = self.fast_threshold;
        check("fast_threshold", t, t > 0.0 && t < 1.0)?;
        let k = self.harris_k;
        check("harris_k", k, (0.02..=0.15).contains(&k))?;
        let r = self.harris_rel_threshold;
        check("harris_rel_threshold", r, r > 0.0 && r < 1.0)?;
        let d = self.doh_threshold;
        check("doh_threshold", d, d >= 0.0 && d.is_finite())
    }

    pub fn detect(&self, img: &GrayImage) -> Result<Vec<Keypoint>, FeatureError> {
        match self.detector {
            Detector::Fast => detect_fast(img, self.fast_threshold),
            Detector::Harris => detect_harris(img, self.harris_k, self.harris_rel_threshold),
            Detector::Doh => detect_doh(img, self.doh_threshold),
        }
    }
}

fn require_size(img: &GrayImage, min: u32) -> Result<(), FeatureError> {
    if img.width() < min || img.height() < min {
        return Err(FeatureError::ImageTooSmall {
            width: img.width(),
            height: img.height(),
            min,
        });
    }
    Ok(())
}

/// 3×3 non-maximum suppression over a dense response grid.
///
/// A pixel survives if its response is positive, passes `keep`, strictly beats
/// earlier neighbours in raster order and is not beaten by later ones, so
/// plateaus yield exactly one point. `NaN` marks cells with no response.
fn suppress_3x3(
    width: usize,
    height: usize,
    response: &[f64],
    keep: impl Fn(f64) -> bool,
) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for y in 0..height {
        for x in 0..width {
            let r = response[y * width + x];
            if r.is_nan() || r <= 0.0 || !keep(r) {
                continue;
            }
            let mut is_max = true;
            'n: for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                    if nx < 0 || ny < 0 || nx >= width as i64 || ny >= height as i64 {
                        continue;
                    }
                    let n = response[ny as usize * width + nx as usize];
                    if n.is_nan() {
                        continue;
                    }
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if n > r || (earlier && n == r) {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                out.push((x, y, r));
            }
        }
    }
    out
}
