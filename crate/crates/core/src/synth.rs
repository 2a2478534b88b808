//! Seeded synthetic dive scenes with known camera path and subject trajectory.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ingest::{FrameSequence, IngestError};
use crate::raster::{ImageBuffer, RasterError};
use crate::registration::Point;
use crate::segmentation::hsv_to_rgb;

/// Hue arc used for coloured texture patches, in degrees.
pub const PALETTE_HUES: (f64, f64) = (100.0, 260.0);

/// Minimum hue distance between the subject and any texture colour.
pub const MIN_HUE_SEPARATION: f64 = 60.0;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("scene spec out of bounds: {0}")]
    SpecOutOfBounds(String),
    #[error("series lengths differ: {est} estimated vs {truth} truth")]
    LengthMismatch { est: usize, truth: usize },
    #[error("reference index {index} outside series of {len}")]
    BadReference { index: usize, len: usize },
    #[error("no valid samples to score")]
    NoOverlap,
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("writing scene: {0}")]
    Io(#[from] std::io::Error),
}

/// Filled ellipse on a ballistic path, in background coordinates.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SubjectSpec {
    pub radii: (f64, f64),
    /// Hue in degrees, saturation and value in `[0, 1]`.
    pub hsv: (f64, f64, f64),
    pub x0: f64,
    pub y0: f64,
    pub vx: f64,
    pub vy: f64,
    /// Downward acceleration, px/s².
    pub g: f64,
}

impl SubjectSpec {
    pub fn position(&self, t: f64) -> Point {
        Point::new(self.x0 + self.vx * t, self.y0 + self.vy * t + 0.5 * self.g * t * t)
    }

    /// Time of the highest point; `None` unless the subject rises then falls.
    pub fn apex_time(&self) -> Option<f64> {
        (self.g > 0.0 && self.vy < 0.0).then(|| -self.vy / self.g)
    }

    /// Rise above `y0` at the apex.
    pub fn apex_rise(&self) -> Option<f64> {
        self.apex_time().map(|_| self.vy * self.vy / (2.0 * self.g))
    }

    /// First time after the apex at which the centre reaches `water_line_y`.
    pub fn water_crossing_time(&self, water_line_y: f64) -> Option<f64> {
        // 0.5 g t² + vy t + (y0 - w) = 0, larger root.
        let (a, b, c) = (0.5 * self.g, self.vy, self.y0 - water_line_y);
        if a <= 0.0 {
            return None;
        }
        let disc = b * b - 4.0 * a * c;
        (disc >= 0.0).then(|| (-b + disc.sqrt()) / (2.0 * a))
    }

    pub fn rgb(&self) -> [u8; 3] {
        hsv_to_rgb(self.hsv.0, self.hsv.1, self.hsv.2)
    }

    pub fn covers(&self, centre: Point, x: f64, y: f64) -> bool {
        let (dx, dy) = ((x - centre.x) / self.radii.0, (y - centre.y) / self.radii.1);
        dx * dx + dy * dy <= 1.0
    }
}

impl Default for SubjectSpec {
    fn default() -> Self {
        Self {
            radii: (12.0, 20.0),
            hsv: (20.0, 0.5, 0.8),
            x0: 330.0,
            y0: 150.0,
            vx: 100.0,
            vy: -160.0,
            g: 160.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub background_size: (u32, u32),
    pub texture_seed: u64,
    /// Top-left corner of each frame's window on the background.
    pub camera_path: Vec<(u32, u32)>,
    /// `None` renders frames without a subject.
    pub subject: Option<SubjectSpec>,
    pub frame_size: (u32, u32),
    pub fps: f64,
    /// Background row of the water surface, for metrics.
    pub water_line_y: f64,
}

fn jitter(rng: &mut ChaCha8Rng, amp: i64) -> i64 {
    if amp == 0 {
        0
    } else {
        rng.gen_range(-amp..=amp)
    }
}

impl SceneSpec {
    /// 60 frames of 640×480 panning 300 px to the right with ±2 px shake.
    pub fn pan(seed: u64) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x00CA_3E7A);
        let n = 60;
        let camera_path = (0..n)
            .map(|k| {
                let base = 5 + (300 * k + (n - 1) / 2) / (n - 1);
                let x = base as i64 + jitter(&mut rng, 2);
                let y = 40 + jitter(&mut rng, 2);
                (x as u32, y as u32)
            })
            .collect();
        SceneSpec {
            background_size: (1000, 560),
            texture_seed: seed,
            camera_path,
            subject: Some(SubjectSpec::default()),
            frame_size: (640, 480),
            fps: 20.0,
            water_line_y: 350.0,
        }
    }

    /// Camera held in place with `amp` px of shake on both axes.
    pub fn jitter(seed: u64, amp: u32) -> SceneSpec {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x517_7E12);
        let m = 10 + amp;
        let camera_path = (0..60)
            .map(|_| {
                let x = m as i64 + jitter(&mut rng, amp as i64);
                let y = m as i64 + jitter(&mut rng, amp as i64);
                (x as u32, y as u32)
            })
            .collect();
        SceneSpec {
            background_size: (640 + 2 * m, 480 + 2 * m),
            texture_seed: seed,
            camera_path,
            subject: Some(SubjectSpec {
                x0: 220.0,
                vx: 60.0,
                ..SubjectSpec::default()
            }),
            frame_size: (640, 480),
            fps: 20.0,
            water_line_y: 350.0,
        }
    }

    /// Camera fixed at `(10, 10)` for 60 frames.
    pub fn still(seed: u64) -> SceneSpec {
        SceneSpec {
            camera_path: vec![(10, 10); 60],
            ..SceneSpec::jitter(seed, 0)
        }
    }

    pub fn frame_count(&self) -> usize {
        self.camera_path.len()
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let oob = |m: String| Err(SynthError::SpecOutOfBounds(m));
        let (bw, bh) = self.background_size;
        let (fw, fh) = self.frame_size;
        if fw < 2 || fh < 2 || bw < fw || bh < fh {
            return oob(format!("frame {fw}x{fh} does not fit background {bw}x{bh}"));
        }
        if self.camera_path.len() < 2 {
            return oob(format!("{} frames, need at least 2", self.camera_path.len()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return oob(format!("fps {}", self.fps));
        }
        for (k, &(x, y)) in self.camera_path.iter().enumerate() {
            if x as u64 + fw as u64 > bw as u64 || y as u64 + fh as u64 > bh as u64 {
                return oob(format!("frame {k} window at ({x},{y}) leaves the background"));
            }
        }
        if let Some(s) = &self.subject {
            if !(s.radii.0 > 0.0 && s.radii.1 > 0.0) {
                return oob(format!("subject radii {:?}", s.radii));
            }
            let (h, sat, v) = s.hsv;
            if !(0.0..=1.0).contains(&sat) || !(0.0..=1.0).contains(&v) {
                return oob(format!("subject colour {:?}", s.hsv));
            }
            let gap = hue_distance_to_palette(h.rem_euclid(360.0));
            if gap < MIN_HUE_SEPARATION {
                return oob(format!("subject hue {h} is only {gap:.1} degrees from the texture palette"));
            }
        }
        Ok(())
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 / self.fps
    }
}

fn hue_distance_to_palette(h: f64) -> f64 {
    let (lo, hi) = PALETTE_HUES;
    if (lo..=hi).contains(&h) {
        return 0.0;
    }
    let d = |a: f64, b: f64| {
        let d = (a - b).abs().rem_euclid(360.0);
        d.min(360.0 - d)
    };
    d(h, lo).min(d(h, hi))
}

/// Blobs and bars in palette colours and greys on a grey field, softened by a
/// 3×3 box blur.
pub fn texture(width: u32, height: u32, seed: u64) -> ImageBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (width as usize, height as usize);
    let mut px = vec![[128u8; 3]; w * h];
    let shapes = (w * h) / 500;
    for _ in 0..shapes {
        let colour = if rng.gen_bool(0.4) {
            let v = rng.gen_range(0.05..0.95);
            hsv_to_rgb(0.0, 0.0, v)
        } else {
            let hue = rng.gen_range(PALETTE_HUES.0..=PALETTE_HUES.1);
            hsv_to_rgb(hue, rng.gen_range(0.4..=1.0), rng.gen_range(0.2..=1.0))
        };
        let cx = rng.gen_range(0..w) as i64;
        let cy = rng.gen_range(0..h) as i64;
        let round = rng.gen_bool(0.5);
        let (rx, ry) = (rng.gen_range(3..18i64), rng.gen_range(3..18i64));
        for y in (cy - ry).max(0)..(cy + ry + 1).min(h as i64) {
            for x in (cx - rx).max(0)..(cx + rx + 1).min(w as i64) {
                let inside = !round || {
                    let (dx, dy) = ((x - cx) as f64 / rx as f64, (y - cy) as f64 / ry as f64);
                    dx * dx + dy * dy <= 1.0
                };
                if inside {
                    px[y as usize * w + x as usize] = colour;
                }
            }
        }
    }
    let blurred = ImageBuffer::from_fn(width, height, |x, y| {
        let mut acc = [0u32; 3];
        let mut n = 0;
        for yy in y.saturating_sub(1)..(y + 2).min(height) {
            for xx in x.saturating_sub(1)..(x + 2).min(width) {
                let p = px[yy as usize * w + xx as usize];
                for c in 0..3 {
                    acc[c] += p[c] as u32;
                }
                n += 1;
            }
        }
        acc.map(|a| ((a + n / 2) / n) as u8)
    });
    blurred.expect("texture size is non-zero")
}

#[derive(Clone, Debug)]
pub struct SynthScene {
    pub sequence: FrameSequence,
    pub background: ImageBuffer,
    /// Camera window corner per frame, background px.
    pub truth_path: Vec<Point>,
    /// Subject centre per frame, background px.
    pub truth_trajectory: Vec<Point>,
}

impl SynthScene {
    /// Truth trajectory in reference-frame coordinates of `reference`.
    pub fn trajectory_in_reference(&self, reference: usize) -> Vec<Point> {
        let c = self.truth_path[reference];
        self.truth_trajectory
            .iter()
            .map(|p| Point::new(p.x - c.x, p.y - c.y))
            .collect()
    }
}

pub fn generate(spec: &SceneSpec) -> Result<SynthScene, SynthError> {
    spec.validate()?;
    let (bw, bh) = spec.background_size;
    let (fw, fh) = spec.frame_size;
    let background = texture(bw, bh, spec.texture_seed);
    let ks: Vec<usize> = (0..spec.frame_count()).collect();
    let truth_trajectory: Vec<Point> = ks
        .iter()
        .map(|&k| spec.subject.map_or(Point::new(0.0, 0.0), |s| s.position(spec.time(k))))
        .collect();
    let frames = crate::par::par_map(&ks, |&k| -> Result<ImageBuffer, RasterError> {
        let (cx, cy) = spec.camera_path[k];
        let mut frame = background.crop(cx, cy, fw, fh)?;
        if let Some(s) = &spec.subject {
            let c = Point::new(truth_trajectory[k].x - cx as f64, truth_trajectory[k].y - cy as f64);
            let rgb = s.rgb();
            let x0 = (c.x - s.radii.0).floor().max(0.0) as u32;
            let y0 = (c.y - s.radii.1).floor().max(0.0) as u32;
            let x1 = (c.x + s.radii.0).ceil().min(fw as f64 - 1.0);
            let y1 = (c.y + s.radii.1).ceil().min(fh as f64 - 1.0);
            if x1 >= 0.0 && y1 >= 0.0 {
                for y in y0..=y1 as u32 {
                    for x in x0..=x1 as u32 {
                        if s.covers(c, x as f64, y as f64) {
                            frame.set(x, y, rgb);
                        }
                    }
                }
            }
        }
        Ok(frame)
    });
    let frames = frames.into_iter().collect::<Result<Vec<_>, _>>()?;
    let sequence = FrameSequence::decimate(frames, spec.fps, spec.fps)?;
    let truth_path = spec
        .camera_path
        .iter()
        .map(|&(x, y)| Point::new(x as f64, y as f64))
        .collect();
    Ok(SynthScene {
        sequence,
        background,
        truth_path,
        truth_trajectory,
    })
}

/// Writes `frame_NNNNNN.png`, `background.png`, `truth_path.csv` and `truth_traj.csv`.
pub fn write_scene(scene: &SynthScene, dir: impl AsRef<Path>) -> Result<(), SynthError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    for (k, f) in scene.sequence.frames.iter().enumerate() {
        f.write(dir.join(format!("frame_{:06}.png", k + 1)))?;
    }
    scene.background.write(dir.join("background.png"))?;
    let mut path = String::from("frame,tx_px,ty_px\n");
    for (k, p) in scene.truth_path.iter().enumerate() {
        writeln!(path, "{k},{},{}", p.x, p.y).unwrap();
    }
    std::fs::write(dir.join("truth_path.csv"), path)?;
    let mut traj = String::from("frame,t_s,x_px,y_px\n");
    for (k, p) in scene.truth_trajectory.iter().enumerate() {
        writeln!(traj, "{k},{},{},{}", scene.sequence.timestamps[k], p.x, p.y).unwrap();
    }
    std::fs::write(dir.join("truth_traj.csv"), traj)?;
    Ok(())
}

fn rms(errors: impl Iterator<Item = f64>) -> Result<f64, SynthError> {
    let (mut sum, mut n) = (0.0, 0usize);
    for e in errors {
        sum += e * e;
        n += 1;
    }
    if n == 0 {
        return Err(SynthError::NoOverlap);
    }
    Ok((sum / n as f64).sqrt())
}

/// RMS Euclidean error after subtracting each series' value at `reference`.
pub fn score(est: &[Point], truth: &[Point], reference: usize) -> Result<f64, SynthError> {
    if est.len() != truth.len() {
        return Err(SynthError::LengthMismatch {
            est: est.len(),
            truth: truth.len(),
        });
    }
    if reference >= est.len() {
        return Err(SynthError::BadReference {
            index: reference,
            len: est.len(),
        });
    }
    let (e0, t0) = (est[reference], truth[reference]);
    rms(est.iter().zip(truth).map(|(e, t)| {
        Point::new(e.x - e0.x, e.y - e0.y).distance(Point::new(t.x - t0.x, t.y - t0.y))
    }))
}

/// RMS Euclidean error over samples present in `est`; both series must already
/// share a coordinate frame.
pub fn score_traj(est: &[Option<Point>], truth: &[Point]) -> Result<f64, SynthError> {
    if est.len() != truth.len() {
        return Err(SynthError::LengthMismatch {
            est: est.len(),
            truth: truth.len(),
        });
    }
    rms(est
        .iter()
        .zip(truth)
        .filter_map(|(e, t)| e.map(|e| e.distance(*t))))
}
