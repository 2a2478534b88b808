//! Frame-directory loading and temporal decimation.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::raster::ImageBuffer;

/// Sampling rates below this undersample a dive's figures.
pub const ALIASING_FLOOR_HZ: f64 = 6.0;

pub const DEFAULT_SAMPLE_FPS: f64 = 20.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("need at least 2 frames, found {found}")]
    NoFrames { found: usize },
    #[error("frame {index} is {actual:?}, expected {expected:?}")]
    MixedGeometry {
        index: usize,
        expected: (u32, u32),
        actual: (u32, u32),
    },
    #[error("cannot read frame {path}: {reason}")]
    UnreadableFrame { path: PathBuf, reason: String },
    #[error("two files carry frame index {0}")]
    DuplicateIndex(u64),
    #[error("bad sampling rate: sample {sample_fps} Hz, source {source_fps} Hz")]
    BadRate { source_fps: f64, sample_fps: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub enum SamplingWarning {
    BelowAliasingFloor { sample_fps: f64 },
}

impl std::fmt::Display for SamplingWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SamplingWarning::BelowAliasingFloor { sample_fps } => write!(
                f,
                "sampling at {sample_fps} Hz is below the {ALIASING_FLOOR_HZ} Hz aliasing floor"
            ),
        }
    }
}

/// Decimated frames with uniform timestamps `j / sample_fps`.
#[derive(Clone, Debug)]
pub struct FrameSequence {
    pub frames: Vec<ImageBuffer>,
    pub source_fps: f64,
    pub sample_fps: f64,
    pub timestamps: Vec<f64>,
    pub warnings: Vec<SamplingWarning>,
}

impl FrameSequence {
    /// Applies the sampling policy to frames already in memory.
    pub fn decimate(
        frames: Vec<ImageBuffer>,
        source_fps: f64,
        sample_fps: f64,
    ) -> Result<Self, IngestError> {
        let step = decimation_step(source_fps, sample_fps)?;
        let frames: Vec<_> = frames.into_iter().step_by(step).collect();
        Self::assemble(frames, source_fps, sample_fps)
    }

    fn assemble(
        frames: Vec<ImageBuffer>,
        source_fps: f64,
        sample_fps: f64,
    ) -> Result<Self, IngestError> {
        if frames.len() < 2 {
            return Err(IngestError::NoFrames {
                found: frames.len(),
            });
        }
        let expected = frames[0].dimensions();
        if let Some((index, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.dimensions() != expected)
        {
            return Err(IngestError::MixedGeometry {
                index,
                expected,
                actual: f.dimensions(),
            });
        }
        let timestamps = (0..frames.len()).map(|j| j as f64 / sample_fps).collect();
        let mut warnings = Vec::new();
        if sample_fps < ALIASING_FLOOR_HZ {
            let w = SamplingWarning::BelowAliasingFloor { sample_fps };
            log::warn!("{w}");
            warnings.push(w);
        }
        Ok(Self {
            frames,
            source_fps,
            sample_fps,
            timestamps,
            warnings,
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_size(&self) -> (u32, u32) {
        self.frames[0].dimensions()
    }
}

/// `round(source_fps / sample_fps)`, validated.
pub fn decimation_step(source_fps: f64, sample_fps: f64) -> Result<usize, IngestError> {
    let bad = IngestError::BadRate {
        source_fps,
        sample_fps,
    };
    if !(sample_fps > 0.0 && source_fps.is_finite() && sample_fps <= source_fps) {
        return Err(bad);
    }
    Ok(((source_fps / sample_fps).round() as usize).max(1))
}

/// Number of frames kept out of `n` for a given step.
pub fn retained_count(n: usize, step: usize) -> usize {
    if n == 0 {
        0
    } else {
        (n - 1) / step + 1
    }
}

/// Trailing decimal index of a frame file stem such as `frame_000042`.
fn frame_index(path: &Path) -> Option<u64> {
    let ext = path.extension()?.to_str()?.to_ascii_lowercase();
    if ext != "png" && ext != "ppm" {
        return None;
    }
    let stem = path.file_stem()?.to_str()?;
    let digits_start = stem
        .char_indices()
        .rev()
        .take_while(|(_, c)| c.is_ascii_digit())
        .last()?
        .0;
    stem[digits_start..].parse().ok()
}

/// Frame files in `dir`, ordered by numeric index.
pub fn list_frames(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>, IngestError> {
    let dir = dir.as_ref();
    let entries = std::fs::read_dir(dir).map_err(|e| IngestError::UnreadableFrame {
        path: dir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut indexed = Vec::new();
    for entry in entries {
        let path = entry
            .map_err(|e| IngestError::UnreadableFrame {
                path: dir.to_path_buf(),
                reason: e.to_string(),
            })?
            .path();
        if let Some(idx) = frame_index(&path) {
            indexed.push((idx, path));
        }
    }
    indexed.sort();
    if let Some(w) = indexed.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(IngestError::DuplicateIndex(w[0].0));
    }
    Ok(indexed.into_iter().map(|(_, p)| p).collect())
}

/// Loads every `round(source_fps / sample_fps)`-th frame of a numbered directory.
pub fn load_sequence(
    dir: impl AsRef<Path>,
    source_fps: f64,
    sample_fps: f64,
) -> Result<FrameSequence, IngestError> {
    let step = decimation_step(source_fps, sample_fps)?;
    let paths = list_frames(dir)?;
    if paths.len() < 2 {
        return Err(IngestError::NoFrames { found: paths.len() });
    }
    let read = |p: &PathBuf| {
        ImageBuffer::read(p).map_err(|e| IngestError::UnreadableFrame {
            path: p.clone(),
            reason: e.to_string(),
        })
    };
    let kept: Vec<&PathBuf> = paths.iter().step_by(step).collect();
    let frames: Result<Vec<_>, _> = crate::par::par_map(&kept, |p| read(p)).into_iter().collect();
    FrameSequence::assemble(frames?, source_fps, sample_fps)
}
