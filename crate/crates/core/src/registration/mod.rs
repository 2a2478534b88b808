//! Consecutive-frame matching, robust affine estimation and chaining into a
//! global camera path.

mod affine;
mod matching;
mod path;

use thiserror::Error;

pub use affine::{
    apply, compose, estimate_affine_lsq, estimate_affine_ransac, invert, reprojection_error,
    AffineTransform2D, RansacFit, DEFAULT_RANSAC_ITERS, DEFAULT_RANSAC_TOL, MIN_ABS_DET, MIN_INLIERS,
};
pub use matching::{match_descriptors, Match, DEFAULT_RATIO, SINGLETON_MAX_DISTANCE};
pub use path::{
    camera_displacement, chain_to_reference, CameraPath, ChainedPath, ConditioningWarning,
    ReferencePolicy, CONDITIONING_DET_RANGE, CONDITIONING_DIAGONALS,
};

use crate::features::{describe, DetectorParams, FeatureError, Keypoint};
use crate::par::par_map;
use crate::raster::GrayImage;

#[derive(Debug, Error, PartialEq)]
pub enum RegistrationError {
    #[error("correspondences are degenerate (fewer than 3 or collinear)")]
    Degenerate,
    #[error("no consensus: best set has {best} inliers, {required} required")]
    NoConsensus { best: usize, required: usize },
    #[error("transform is singular (det {det:e})")]
    Singular { det: f64 },
    #[error("reference frame {index} outside a {frames}-frame sequence")]
    BadReference { index: usize, frames: usize },
    #[error("camera path line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("frame pair {pair}: {source}")]
    Pair {
        pair: usize,
        #[source]
        source: Box<RegistrationError>,
    },
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Self { x, y }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct RegistrationParams {
    pub ratio: f64,
    pub ransac_iters: usize,
    pub ransac_tol: f64,
    pub seed: u64,
    pub reference: ReferencePolicy,
}

impl Default for RegistrationParams {
    fn default() -> Self {
        Self {
            ratio: DEFAULT_RATIO,
            ransac_iters: DEFAULT_RANSAC_ITERS,
            ransac_tol: DEFAULT_RANSAC_TOL,
            seed: 0,
            reference: ReferencePolicy::Middle,
        }
    }
}

/// Keypoints and descriptors of one frame.
#[derive(Clone, Debug)]
pub struct FrameFeatures {
    pub keypoints: Vec<Keypoint>,
    pub descriptors: Vec<crate::features::Descriptor>,
}

pub fn frame_features(img: &GrayImage, detector: &DetectorParams) -> Result<FrameFeatures, FeatureError> {
    let keypoints = detector.detect(img)?;
    let descriptors = describe(img, &keypoints).descriptors;
    Ok(FrameFeatures {
        keypoints,
        descriptors,
    })
}

/// Correspondences `(point in b, point in a)` so the fitted transform maps b into a.
pub fn correspondences(a: &FrameFeatures, b: &FrameFeatures, ratio: f64) -> Vec<(Point, Point)> {
    match_descriptors(&a.descriptors, &b.descriptors, ratio)
        .into_iter()
        .map(|m| {
            let ka = a.keypoints[m.index_a];
            let kb = b.keypoints[m.index_b];
            (Point::new(kb.x, kb.y), Point::new(ka.x, ka.y))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SequenceRegistration {
    pub pairwise: Vec<AffineTransform2D>,
    pub chained: ChainedPath,
    /// Matches and RANSAC inliers per consecutive pair.
    pub match_counts: Vec<(usize, usize)>,
}

/// Algorithm front half: features per frame, consecutive matching, RANSAC
/// per pair, then chaining to the reference frame.
pub fn register_sequence(
    frames: &[GrayImage],
    detector: &DetectorParams,
    params: &RegistrationParams,
) -> Result<SequenceRegistration, RegistrationError> {
    let reference = params.reference.resolve(frames.len())?;
    let features = par_map(frames, |f| frame_features(f, detector))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;
    let pairs: Vec<usize> = (0..frames.len().saturating_sub(1)).collect();
    let fits = par_map(&pairs, |&i| {
        let corr = correspondences(&features[i], &features[i + 1], params.ratio);
        let seed = params.seed.wrapping_add(i as u64);
        estimate_affine_ransac(&corr, params.ransac_iters, params.ransac_tol, seed)
            .map(|fit| (fit, corr.len()))
            .map_err(|e| RegistrationError::Pair {
                pair: i,
                source: Box::new(e),
            })
    });
    let mut pairwise = Vec::with_capacity(pairs.len());
    let mut match_counts = Vec::with_capacity(pairs.len());
    for fit in fits {
        let (fit, matched) = fit?;
        match_counts.push((matched, fit.inliers.len()));
        pairwise.push(fit.transform);
    }
    let size = (frames[0].width(), frames[0].height());
    let chained = chain_to_reference(&pairwise, reference, size)?;
    Ok(SequenceRegistration {
        pairwise,
        chained,
        match_counts,
    })
}
