//! End-to-end stages: registration and mosaicking, subject tracking, and the
//! detector comparison harness.

use std::fmt::Write as _;

use thiserror::Error;

use crate::config::{ConfigError, PipelineConfig};
use crate::features::{Detector, DetectorParams, FeatureError};
use crate::ingest::{FrameSequence, IngestError};
use crate::mosaic::{build_mosaic, Mosaic, MosaicError, Panorama, RegisteredFrame};
use crate::raster::{to_grayscale, BinaryMask, GrayImage, ImageBuffer};
use crate::registration::{
    camera_displacement, frame_features, match_descriptors, register_sequence, Point,
    RegistrationError, SequenceRegistration,
};
use crate::segmentation::{
    barycenter, connected_components, select_subject, subtract_background, Component,
    SegmentationParams,
};
use crate::tracking::{
    apex, assemble, metrics, smooth, Apex, BarycenterSample, DiveMetrics, Trajectory, TrackingError,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Registration(#[from] RegistrationError),
    #[error(transparent)]
    Mosaic(#[from] MosaicError),
    #[error(transparent)]
    Tracking(#[from] TrackingError),
}

#[derive(Clone, Debug)]
pub struct MosaicRun {
    pub registration: SequenceRegistration,
    pub mosaic: Mosaic,
    /// Frame centre relative to the reference frame centre.
    pub displacement: Vec<Point>,
}

impl MosaicRun {
    pub fn panorama(&self) -> &Panorama {
        &self.mosaic.panorama
    }

    pub fn reference_index(&self) -> usize {
        self.registration.chained.path.reference_index
    }
}

pub fn grayscale_frames(sequence: &FrameSequence) -> Vec<GrayImage> {
    crate::par::par_map(&sequence.frames, to_grayscale)
}

pub fn run_mosaic(sequence: &FrameSequence, config: &PipelineConfig) -> Result<MosaicRun, PipelineError> {
    config.validate()?;
    let gray = grayscale_frames(sequence);
    let registration = register_sequence(&gray, &config.detector, &config.registration)?;
    let path = &registration.chained.path;
    let mosaic = build_mosaic(&sequence.frames, path)?;
    let displacement = camera_displacement(path, sequence.frame_size());
    Ok(MosaicRun {
        registration,
        mosaic,
        displacement,
    })
}

/// `frame,dx_px,dy_px` rows of the camera displacement.
pub fn displacement_csv(displacement: &[Point]) -> String {
    let mut s = String::from("frame,dx_px,dy_px\n");
    for (i, p) in displacement.iter().enumerate() {
        writeln!(s, "{i},{},{}", p.x, p.y).unwrap();
    }
    s
}

/// Skin-range mask of the panorama; never-written pixels are excluded.
pub fn background_mask(panorama: &Panorama, params: &SegmentationParams) -> BinaryMask {
    BinaryMask::from_fn(panorama.width(), panorama.height(), |x, y| {
        panorama.coverage_at(x, y) > 0 && params.range.accepts_rgb(panorama.image.get(x, y))
    })
}

/// Skin-range mask of a projected frame over its written pixels.
pub fn frame_mask(frame: &RegisteredFrame, params: &SegmentationParams) -> BinaryMask {
    let mut m = BinaryMask::empty(frame.extent.width, frame.extent.height);
    let (ox, oy) = frame.window_origin;
    let (ww, wh) = frame.window_size;
    for y in oy..oy + wh {
        for x in ox..ox + ww {
            if frame.get(x, y).is_some_and(|p| params.range.accepts_rgb(p)) {
                m.set(x, y, true);
            }
        }
    }
    m
}

/// Subject component per projected frame. Filtering runs in parallel; the
/// selection walks frames in order so ties can follow the previous barycentre.
pub fn segment_frames(mosaic: &Mosaic, params: &SegmentationParams) -> Vec<Option<Component>> {
    let bg = background_mask(&mosaic.panorama, params);
    let candidates = crate::par::par_map(&mosaic.frames, |f| {
        let diff = subtract_background(&frame_mask(f, params), &bg, params.guard_dilate)
            .expect("masks share the panorama extent");
        connected_components(&diff)
    });
    let mut previous = None;
    candidates
        .iter()
        .map(|comps| {
            let chosen = select_subject(comps, params.min_area, previous).ok().cloned();
            if let Some(c) = &chosen {
                previous = Some(barycenter(c));
            }
            chosen
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct TrackRun {
    pub mosaic: MosaicRun,
    pub subjects: Vec<Option<Component>>,
    pub trajectory: Trajectory,
    /// Panorama row used as the water surface.
    pub water_line_y: f64,
    pub apex: Apex,
    pub metrics: Result<DiveMetrics, TrackingError>,
}

impl TrackRun {
    /// Fixed-key report; entry fields read `none` when the water line is never crossed.
    pub fn report(&self) -> String {
        let mut s = format!(
            "frames={}\nvalid_samples={}\nwater_line_y_px={:.4}\n",
            self.trajectory.len(),
            self.trajectory.valid_count(),
            self.water_line_y
        );
        match &self.metrics {
            Ok(m) => s.push_str(&m.report()),
            Err(_) => {
                writeln!(s, "max_height_px={:.4}", self.apex.height).unwrap();
                s.push_str("max_height_m=none\n");
                writeln!(s, "apex_time_s={:.4}", self.apex.time).unwrap();
                writeln!(s, "no_apex={}", self.apex.no_apex).unwrap();
                s.push_str("entry_x_px=none\nentry_time_s=none\nlateral_deviation_px=none\nlateral_deviation_m=none\n");
            }
        }
        s
    }
}

pub fn run_track(sequence: &FrameSequence, config: &PipelineConfig) -> Result<TrackRun, PipelineError> {
    let mosaic = run_mosaic(sequence, config)?;
    track_mosaic(mosaic, &sequence.timestamps, config)
}

/// Tracking stages on an existing registration; `timestamps` has one entry per frame.
pub fn track_mosaic(mosaic: MosaicRun, timestamps: &[f64], config: &PipelineConfig) -> Result<TrackRun, PipelineError> {
    config.validate()?;
    let subjects = segment_frames(&mosaic.mosaic, &config.segmentation);
    let samples = subjects
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let t = timestamps[i];
            match c {
                Some(c) => {
                    let p = barycenter(c);
                    BarycenterSample::measured(i, t, p.x, p.y, c.area as f64)
                }
                None => BarycenterSample::missing(i, t),
            }
        })
        .collect();
    let trajectory = smooth(&assemble(samples, config.max_gap)?, config.window)?;
    let water_line_y = config
        .water_line_y
        .unwrap_or(mosaic.panorama().height() as f64 - 1.0);
    let apex = apex(&trajectory, water_line_y)?;
    let metrics = metrics(&trajectory, water_line_y, config.px_per_meter);
    Ok(TrackRun {
        mosaic,
        subjects,
        trajectory,
        water_line_y,
        apex,
        metrics,
    })
}

const CONTOUR: [u8; 3] = [0, 255, 0];
const MARKER: [u8; 3] = [255, 0, 0];

/// Frame drawn over the panorama with the subject outline and a barycentre cross.
pub fn annotate(frame: &RegisteredFrame, panorama: &Panorama, subject: Option<&Component>) -> ImageBuffer {
    let mut img = frame.over(&panorama.image);
    let Some(c) = subject else {
        return img;
    };
    let (w, h) = img.dimensions();
    // Component pixels are sorted by (y, x).
    let member = |x: i64, y: i64| {
        x >= 0 && y >= 0 && c.pixels.binary_search_by_key(&(y as u32, x as u32), |&(px, py)| (py, px)).is_ok()
    };
    for &(x, y) in &c.pixels {
        let (xi, yi) = (x as i64, y as i64);
        let edge = !(member(xi - 1, yi) && member(xi + 1, yi) && member(xi, yi - 1) && member(xi, yi + 1));
        if edge {
            img.set(x, y, CONTOUR);
        }
    }
    let b = barycenter(c);
    let (bx, by) = (b.x.round() as i64, b.y.round() as i64);
    for d in -6i64..=6 {
        for (x, y) in [(bx + d, by), (bx, by + d)] {
            if x >= 0 && y >= 0 && (x as u32) < w && (y as u32) < h {
                img.set(x as u32, y as u32, MARKER);
            }
        }
    }
    img
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectorReport {
    pub detector: Detector,
    pub mean_keypoints: f64,
    pub mean_matches: f64,
}

/// Mean matched-feature count over consecutive pairs for each detector.
pub fn compare_detectors(
    frames: &[GrayImage],
    base: &DetectorParams,
    ratio: f64,
) -> Result<Vec<DetectorReport>, PipelineError> {
    if frames.len() < 2 {
        return Err(IngestError::NoFrames { found: frames.len() }.into());
    }
    Detector::ALL
        .iter()
        .map(|&d| {
            let params = base.with_detector(d);
            let feats = crate::par::par_map(frames, |f| frame_features(f, &params))
                .into_iter()
                .collect::<Result<Vec<_>, _>>()?;
            let pairs = feats.len() - 1;
            let matched: usize = feats
                .windows(2)
                .map(|w| match_descriptors(&w[0].descriptors, &w[1].descriptors, ratio).len())
                .sum();
            let kps: usize = feats.iter().map(|f| f.keypoints.len()).sum();
            Ok(DetectorReport {
                detector: d,
                mean_keypoints: kps as f64 / feats.len() as f64,
                mean_matches: matched as f64 / pairs as f64,
            })
        })
        .collect()
}

/// `detector,mean_matches` rows.
pub fn detector_csv(reports: &[DetectorReport]) -> String {
    let mut s = String::from("detector,mean_matches\n");
    for r in reports {
        writeln!(s, "{},{}", r.detector, r.mean_matches).unwrap();
    }
    s
}

/// Fraction of described keypoints matched back to themselves when a frame is
/// paired with an exact copy.
pub fn self_match_ratio(frame: &GrayImage, params: &DetectorParams, ratio: f64) -> Result<f64, PipelineError> {
    let f = frame_features(frame, params)?;
    if f.descriptors.is_empty() {
        return Ok(0.0);
    }
    let hits = match_descriptors(&f.descriptors, &f.descriptors, ratio)
        .iter()
        .filter(|m| m.index_a == m.index_b)
        .count();
    Ok(hits as f64 / f.descriptors.len() as f64)
}
