//! Panorama sizing, inverse-mapped frame warping and median background compositing.

use thiserror::Error;

use crate::raster::{BinaryMask, Bilinear, ImageBuffer};
use crate::registration::{AffineTransform2D, CameraPath, Point, RegistrationError};

/// Slack allowed when deciding whether a back-projected sample lies on the frame edge.
const EDGE_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum MosaicError {
    #[error("no registered frames to composite")]
    EmptyInput,
    #[error("registered frames disagree on panorama extent")]
    ExtentMismatch,
    #[error("frame {frame} outside a camera path of {len} frames")]
    FrameOutOfRange { frame: usize, len: usize },
    #[error(transparent)]
    Registration(#[from] RegistrationError),
}

/// Panorama size and the integer offset from reference-frame to panorama coordinates.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PanoramaExtent {
    pub width: u32,
    pub height: u32,
    pub origin_offset: (f64, f64),
}

impl PanoramaExtent {
    pub fn to_panorama(&self, p: Point) -> Point {
        Point::new(p.x + self.origin_offset.0, p.y + self.origin_offset.1)
    }

    pub fn to_reference(&self, p: Point) -> Point {
        Point::new(p.x - self.origin_offset.0, p.y - self.origin_offset.1)
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

fn frame_corners(frame_w: u32, frame_h: u32) -> [Point; 4] {
    let (w, h) = ((frame_w - 1) as f64, (frame_h - 1) as f64);
    [
        Point::new(0.0, 0.0),
        Point::new(w, 0.0),
        Point::new(0.0, h),
        Point::new(w, h),
    ]
}

/// Bounding box of every frame's pixel-centre corners in reference coordinates, rounded outward.
pub fn panorama_extent(path: &CameraPath, frame_w: u32, frame_h: u32) -> PanoramaExtent {
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for t in &path.to_global {
        for c in frame_corners(frame_w, frame_h) {
            let p = t.apply(c);
            min_x = min_x.min(p.x);
            min_y = min_y.min(p.y);
            max_x = max_x.max(p.x);
            max_y = max_y.max(p.y);
        }
    }
    // Absorb float noise so an exact integer corner does not grow the box.
    let down = |v: f64| (v + EDGE_EPS).floor();
    let up = |v: f64| (v - EDGE_EPS).ceil();
    let (x0, y0, x1, y1) = (down(min_x), down(min_y), up(max_x), up(max_y));
    PanoramaExtent {
        width: (x1 - x0) as u32 + 1,
        height: (y1 - y0) as u32 + 1,
        origin_offset: (-x0, -y0),
    }
}

/// A frame resampled into panorama coordinates over its bounding window.
#[derive(Clone, Debug, PartialEq)]
pub struct RegisteredFrame {
    pub frame_index: usize,
    pub extent: PanoramaExtent,
    /// Top-left panorama pixel of the window.
    pub window_origin: (u32, u32),
    pub window_size: (u32, u32),
    pixels: Vec<[u8; 3]>,
    written: Vec<bool>,
}

impl RegisteredFrame {
    fn window_index(&self, x: u32, y: u32) -> Option<usize> {
        let (ox, oy) = self.window_origin;
        let (ww, wh) = self.window_size;
        if x < ox || y < oy || x >= ox + ww || y >= oy + wh {
            return None;
        }
        Some((y - oy) as usize * ww as usize + (x - ox) as usize)
    }

    /// Pixel at panorama `(x, y)` if this frame wrote it.
    pub fn get(&self, x: u32, y: u32) -> Option<[u8; 3]> {
        let i = self.window_index(x, y)?;
        self.written[i].then(|| self.pixels[i])
    }

    pub fn is_written(&self, x: u32, y: u32) -> bool {
        self.window_index(x, y).is_some_and(|i| self.written[i])
    }

    pub fn written_count(&self) -> usize {
        self.written.iter().filter(|w| **w).count()
    }

    /// Written pixels as a panorama-sized mask.
    pub fn mask(&self) -> BinaryMask {
        BinaryMask::from_fn(self.extent.width, self.extent.height, |x, y| self.is_written(x, y))
    }

    /// Panorama-sized raster; unwritten pixels are black.
    pub fn to_image(&self) -> ImageBuffer {
        ImageBuffer::from_fn(self.extent.width, self.extent.height, |x, y| {
            self.get(x, y).unwrap_or([0; 3])
        })
        .expect("extent is non-empty")
    }

    /// Panorama-sized raster with written pixels drawn over `background`.
    pub fn over(&self, background: &ImageBuffer) -> ImageBuffer {
        ImageBuffer::from_fn(self.extent.width, self.extent.height, |x, y| {
            self.get(x, y).unwrap_or_else(|| background.get(x, y))
        })
        .expect("extent is non-empty")
    }
}

/// Inverse-maps `frame` through `t` (frame → reference coordinates) into the panorama.
pub fn warp_frame(
    frame: &ImageBuffer,
    t: &AffineTransform2D,
    extent: &PanoramaExtent,
) -> Result<RegisteredFrame, MosaicError> {
    let inv = t.invert()?;
    let (fw, fh) = frame.dimensions();
    let (mut min_x, mut min_y) = (f64::INFINITY, f64::INFINITY);
    let (mut max_x, mut max_y) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for c in frame_corners(fw, fh) {
        let p = extent.to_panorama(t.apply(c));
        min_x = min_x.min(p.x);
        min_y = min_y.min(p.y);
        max_x = max_x.max(p.x);
        max_y = max_y.max(p.y);
    }
    let lo_x = (min_x + EDGE_EPS).floor().max(0.0);
    let lo_y = (min_y + EDGE_EPS).floor().max(0.0);
    let hi_x = (max_x - EDGE_EPS).ceil().min(extent.width as f64 - 1.0);
    let hi_y = (max_y - EDGE_EPS).ceil().min(extent.height as f64 - 1.0);
    let empty = RegisteredFrame {
        frame_index: 0,
        extent: *extent,
        window_origin: (0, 0),
        window_size: (0, 0),
        pixels: Vec::new(),
        written: Vec::new(),
    };
    if !(hi_x >= lo_x && hi_y >= lo_y) {
        return Ok(empty);
    }
    let (ox, oy) = (lo_x as u32, lo_y as u32);
    let (ww, wh) = ((hi_x - lo_x) as u32 + 1, (hi_y - lo_y) as u32 + 1);
    let (max_u, max_v) = ((fw - 1) as f64, (fh - 1) as f64);
    let snap = |v: f64, max: f64| {
        if v < 0.0 && v > -EDGE_EPS {
            0.0
        } else if v > max && v < max + EDGE_EPS {
            max
        } else {
            v
        }
    };
    let row = |wy: u32| {
        let mut pixels = vec![[0u8; 3]; ww as usize];
        let mut written = vec![false; ww as usize];
        for wx in 0..ww {
            let p = extent.to_reference(Point::new((ox + wx) as f64, (oy + wy) as f64));
            let q = inv.apply(p);
            let (u, v) = (snap(q.x, max_u), snap(q.y, max_v));
            if let Ok(rgb) = frame.sample_bilinear(u, v) {
                pixels[wx as usize] = rgb.map(|c| c.round().clamp(0.0, 255.0) as u8);
                written[wx as usize] = true;
            }
        }
        (pixels, written)
    };
    let rows: Vec<u32> = (0..wh).collect();
    let rows = crate::par::par_map(&rows, |&y| row(y));
    let mut pixels = Vec::with_capacity((ww * wh) as usize);
    let mut written = Vec::with_capacity((ww * wh) as usize);
    for (p, w) in rows {
        pixels.extend(p);
        written.extend(w);
    }
    Ok(RegisteredFrame {
        window_origin: (ox, oy),
        window_size: (ww, wh),
        pixels,
        written,
        ..empty
    })
}

/// Warps frame `frame_index` of a sequence with its camera-path transform.
pub fn project_frame(
    frame_index: usize,
    path: &CameraPath,
    extent: &PanoramaExtent,
    frame: &ImageBuffer,
) -> Result<RegisteredFrame, MosaicError> {
    let t = path
        .to_global
        .get(frame_index)
        .ok_or(MosaicError::FrameOutOfRange {
            frame: frame_index,
            len: path.len(),
        })?;
    let mut out = warp_frame(frame, t, extent)?;
    out.frame_index = frame_index;
    Ok(out)
}

/// Composited background with per-pixel coverage.
#[derive(Clone, Debug, PartialEq)]
pub struct Panorama {
    pub image: ImageBuffer,
    pub origin_offset: (f64, f64),
    pub coverage: Vec<u32>,
}

impl Panorama {
    pub fn width(&self) -> u32 {
        self.image.width()
    }

    pub fn height(&self) -> u32 {
        self.image.height()
    }

    pub fn coverage_at(&self, x: u32, y: u32) -> u32 {
        self.coverage[y as usize * self.image.width() as usize + x as usize]
    }

    /// Pixels no frame ever wrote.
    pub fn never_written(&self) -> BinaryMask {
        BinaryMask::from_fn(self.width(), self.height(), |x, y| self.coverage_at(x, y) == 0)
    }

    pub fn never_written_fraction(&self) -> f64 {
        self.coverage.iter().filter(|c| **c == 0).count() as f64 / self.coverage.len() as f64
    }
}

/// Lower median of a small slice (mutated).
fn lower_median(values: &mut [u8]) -> u8 {
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable(mid).1
}

/// Per-pixel, per-channel lower median over every frame that wrote the pixel.
pub fn composite_background(frames: &[RegisteredFrame]) -> Result<Panorama, MosaicError> {
    let first = frames.first().ok_or(MosaicError::EmptyInput)?;
    let extent = first.extent;
    if frames.iter().any(|f| f.extent != extent) {
        return Err(MosaicError::ExtentMismatch);
    }
    let w = extent.width;
    let rows: Vec<u32> = (0..extent.height).collect();
    let composite_row = |&y: &u32| {
        let active: Vec<&RegisteredFrame> = frames
            .iter()
            .filter(|f| y >= f.window_origin.1 && y < f.window_origin.1 + f.window_size.1)
            .collect();
        let mut out = Vec::with_capacity(w as usize);
        let mut cov = Vec::with_capacity(w as usize);
        let mut stacks: [Vec<u8>; 3] = Default::default();
        for x in 0..w {
            for s in stacks.iter_mut() {
                s.clear();
            }
            for f in &active {
                if let Some(rgb) = f.get(x, y) {
                    for (s, v) in stacks.iter_mut().zip(rgb) {
                        s.push(v);
                    }
                }
            }
            let n = stacks[0].len();
            cov.push(n as u32);
            if n == 0 {
                out.push([0; 3]);
            } else {
                let [r, g, b] = &mut stacks;
                out.push([lower_median(r), lower_median(g), lower_median(b)]);
            }
        }
        (out, cov)
    };
    let rows = crate::par::par_map(&rows, composite_row);
    let mut pixels = Vec::with_capacity(extent.pixel_count());
    let mut coverage = Vec::with_capacity(extent.pixel_count());
    for (p, c) in rows {
        pixels.extend(p);
        coverage.extend(c);
    }
    Ok(Panorama {
        image: ImageBuffer::new(extent.width, extent.height, pixels)
            .expect("extent is non-empty"),
        origin_offset: extent.origin_offset,
        coverage,
    })
}

/// Extent, every projected frame, and their median composite.
#[derive(Clone, Debug)]
pub struct Mosaic {
    pub extent: PanoramaExtent,
    pub frames: Vec<RegisteredFrame>,
    pub panorama: Panorama,
}

pub fn build_mosaic(frames: &[ImageBuffer], path: &CameraPath) -> Result<Mosaic, MosaicError> {
    let first = frames.first().ok_or(MosaicError::EmptyInput)?;
    if frames.len() != path.len() {
        return Err(MosaicError::FrameOutOfRange {
            frame: frames.len() - 1,
            len: path.len(),
        });
    }
    let extent = panorama_extent(path, first.width(), first.height());
    let registered = frames
        .iter()
        .enumerate()
        .map(|(i, f)| project_frame(i, path, &extent, f))
        .collect::<Result<Vec<_>, _>>()?;
    let panorama = composite_background(&registered)?;
    Ok(Mosaic {
        extent,
        frames: registered,
        panorama,
    })
}
