//! `key = value` pipeline configuration with `#` comments.

use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::features::{Detector, DetectorParams};
use crate::ingest::DEFAULT_SAMPLE_FPS;
use crate::registration::{ReferencePolicy, RegistrationParams};
use crate::segmentation::{HsvRange, SegmentationParams};
use crate::tracking::{DEFAULT_MAX_GAP, DEFAULT_WINDOW};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config key `{key}`: {reason}")]
    BadValue { key: String, reason: String },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub source_fps: f64,
    pub sample_fps: f64,
    pub detector: DetectorParams,
    pub registration: RegistrationParams,
    pub segmentation: SegmentationParams,
    pub max_gap: usize,
    pub window: usize,
    /// Panorama row of the water surface; the panorama's bottom row when unset.
    pub water_line_y: Option<f64>,
    pub px_per_meter: Option<f64>,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source_fps: DEFAULT_SAMPLE_FPS,
            sample_fps: DEFAULT_SAMPLE_FPS,
            detector: DetectorParams::default(),
            registration: RegistrationParams::default(),
            segmentation: SegmentationParams::default(),
            max_gap: DEFAULT_MAX_GAP,
            window: DEFAULT_WINDOW,
            water_line_y: None,
            px_per_meter: None,
            threads: 0,
        }
    }
}

/// Every key accepted by [`PipelineConfig::set`], in dump order.
pub const KEYS: &[&str] = &[
    "source_fps",
    "sample_fps",
    "detector",
    "fast_threshold",
    "harris_k",
    "harris_threshold",
    "doh_threshold",
    "ratio",
    "ransac_iters",
    "ransac_tol",
    "reference",
    "seed",
    "h_low",
    "h_high",
    "s_low",
    "s_high",
    "v_low",
    "v_high",
    "guard_dilate",
    "min_area",
    "max_gap",
    "window",
    "water_line_y",
    "px_per_meter",
    "threads",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        reason: e.to_string(),
    })
}

fn parse_opt(key: &str, value: &str) -> Result<Option<f64>, ConfigError> {
    if value.eq_ignore_ascii_case("none") || value.is_empty() {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |v| v.to_string())
}

impl PipelineConfig {
    /// Sets one key from its text value without cross-field validation.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let (d, r, s) = (&mut self.detector, &mut self.registration, &mut self.segmentation);
        match key {
            "source_fps" => self.source_fps = parse(key, value)?,
            "sample_fps" => self.sample_fps = parse(key, value)?,
            "detector" => d.detector = parse::<Detector>(key, value)?,
            "fast_threshold" => d.fast_threshold = parse(key, value)?,
            "harris_k" => d.harris_k = parse(key, value)?,
            "harris_threshold" => d.harris_rel_threshold = parse(key, value)?,
            "doh_threshold" => d.doh_threshold = parse(key, value)?,
            "ratio" => r.ratio = parse(key, value)?,
            "ransac_iters" => r.ransac_iters = parse(key, value)?,
            "ransac_tol" => r.ransac_tol = parse(key, value)?,
            "reference" => r.reference = parse::<ReferencePolicy>(key, value)?,
            "seed" => r.seed = parse(key, value)?,
            "h_low" => s.range.h_low = parse(key, value)?,
            "h_high" => s.range.h_high = parse(key, value)?,
            "s_low" => s.range.s_low = parse(key, value)?,
            "s_high" => s.range.s_high = parse(key, value)?,
            "v_low" => s.range.v_low = parse(key, value)?,
            "v_high" => s.range.v_high = parse(key, value)?,
            "guard_dilate" => s.guard_dilate = parse(key, value)?,
            "min_area" => s.min_area = parse(key, value)?,
            "max_gap" => self.max_gap = parse(key, value)?,
            "window" => self.window = parse(key, value)?,
            "water_line_y" => self.water_line_y = parse_opt(key, value)?,
            "px_per_meter" => self.px_per_meter = parse_opt(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let (d, r, s) = (&self.detector, &self.registration, &self.segmentation);
        Some(match key {
            "source_fps" => self.source_fps.to_string(),
            "sample_fps" => self.sample_fps.to_string(),
            "detector" => d.detector.to_string(),
            "fast_threshold" => d.fast_threshold.to_string(),
            "harris_k" => d.harris_k.to_string(),
            "harris_threshold" => d.harris_rel_threshold.to_string(),
            "doh_threshold" => d.doh_threshold.to_string(),
            "ratio" => r.ratio.to_string(),
            "ransac_iters" => r.ransac_iters.to_string(),
            "ransac_tol" => r.ransac_tol.to_string(),
            "reference" => r.reference.to_string(),
            "seed" => r.seed.to_string(),
            "h_low" => s.range.h_low.to_string(),
            "h_high" => s.range.h_high.to_string(),
            "s_low" => s.range.s_low.to_string(),
            "s_high" => s.range.s_high.to_string(),
            "v_low" => s.range.v_low.to_string(),
            "v_high" => s.range.v_high.to_string(),
            "guard_dilate" => s.guard_dilate.to_string(),
            "min_area" => s.min_area.to_string(),
            "max_gap" => self.max_gap.to_string(),
            "window" => self.window.to_string(),
            "water_line_y" => opt(self.water_line_y),
            "px_per_meter" => opt(self.px_per_meter),
            "threads" => self.threads.to_string(),
            _ => return None,
        })
    }

    /// Applies a config file's text on top of the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<PipelineConfig, ConfigError> {
        let mut c = PipelineConfig::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    /// Every key with its current value; parses back to an equal config.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            writeln!(out, "{key} = {}", self.get(key).expect("listed key")).unwrap();
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, reason: String| {
            Err(ConfigError::BadValue {
                key: key.to_string(),
                reason,
            })
        };
        if !(self.source_fps > 0.0 && self.source_fps.is_finite()) {
            return bad("source_fps", format!("{} is not a positive rate", self.source_fps));
        }
        if !(self.sample_fps > 0.0 && self.sample_fps <= self.source_fps) {
            return bad("sample_fps", format!("{} must be in (0, source_fps]", self.sample_fps));
        }
        if let Err(e) = self.detector.validate() {
            return bad("detector", e.to_string());
        }
        let r = &self.registration;
        if !(r.ratio > 0.0 && r.ratio <= 1.0) {
            return bad("ratio", format!("{} must be in (0, 1]", r.ratio));
        }
        if r.ransac_iters == 0 {
            return bad("ransac_iters", "must be at least 1".into());
        }
        if !(r.ransac_tol > 0.0 && r.ransac_tol.is_finite()) {
            return bad("ransac_tol", format!("{} must be positive", r.ransac_tol));
        }
        if let Err(e) = self.segmentation.range.validate() {
            return bad("h_low", e.to_string());
        }
        if self.segmentation.min_area == 0 {
            return bad("min_area", "must be at least 1".into());
        }
        if self.window == 0 || self.window % 2 == 0 {
            return bad("window", format!("{} must be odd and at least 1", self.window));
        }
        if let Some(w) = self.water_line_y {
            if !w.is_finite() {
                return bad("water_line_y", format!("{w} is not finite"));
            }
        }
        if let Some(p) = self.px_per_meter {
            if !(p > 0.0 && p.is_finite()) {
                return bad("px_per_meter", format!("{p} must be positive"));
            }
        }
        Ok(())
    }

    pub fn hsv_range(&self) -> HsvRange {
        self.segmentation.range
    }
}
