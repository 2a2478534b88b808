//! WebAssembly bindings for the browser demo.
//!
//! The page builds a reduced synthetic dive scene, registers it into a
//! panorama, previews the colour threshold on any frame, and tracks the
//! subject with an adjustable smoothing window.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use divetrack::config::PipelineConfig;
use divetrack::pipeline::{run_mosaic, track_mosaic, MosaicRun, TrackRun};
use divetrack::raster::ImageBuffer;
use divetrack::segmentation::{hsv_threshold, HsvRange};
use divetrack::synth::{generate, score, score_traj, SceneSpec, SubjectSpec, SynthScene};
use divetrack::tracking::export_plot;

pub const MAX_SHAKE: u32 = 5;

/// Half-scale pan: 30 frames of 320×240 at 10 fps, 150 px to the right.
pub fn demo_spec(seed: u64, shake: u32) -> SceneSpec {
    let shake = shake.min(MAX_SHAKE) as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 30i64;
    let mut wobble = || if shake == 0 { 0 } else { rng.gen_range(-shake..=shake) };
    let camera_path = (0..n)
        .map(|k| {
            let x = 5 + (150 * k + (n - 1) / 2) / (n - 1) + wobble();
            let y = 20 + wobble();
            (x as u32, y as u32)
        })
        .collect();
    SceneSpec {
        background_size: (500, 300),
        texture_seed: seed,
        camera_path,
        subject: Some(SubjectSpec {
            radii: (6.0, 10.0),
            x0: 165.0,
            y0: 75.0,
            vx: 50.0,
            vy: -80.0,
            g: 80.0,
            ..SubjectSpec::default()
        }),
        frame_size: (320, 240),
        fps: 10.0,
        water_line_y: 175.0,
    }
}

fn rgba(img: &ImageBuffer) -> Vec<u8> {
    img.pixels().iter().flat_map(|&[r, g, b]| [r, g, b, 255]).collect()
}

fn js_err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    spec: SceneSpec,
    scene: SynthScene,
    run: MosaicRun,
    config: PipelineConfig,
}

impl Demo {
    pub fn build(seed: u64, shake: u32) -> Result<Demo, String> {
        let spec = demo_spec(seed, shake);
        let scene = generate(&spec).map_err(|e| e.to_string())?;
        let mut config = PipelineConfig {
            source_fps: spec.fps,
            sample_fps: spec.fps,
            ..PipelineConfig::default()
        };
        config.registration.seed = seed;
        let run = run_mosaic(&scene.sequence, &config).map_err(|e| e.to_string())?;
        let c = scene.truth_path[run.reference_index()];
        config.water_line_y = Some(spec.water_line_y - c.y + run.panorama().origin_offset.1);
        Ok(Demo { spec, scene, run, config })
    }

    pub fn tracked(&self, range: HsvRange, window: usize) -> Result<TrackRun, String> {
        let mut config = self.config.clone();
        config.segmentation.range = range;
        config.window = window;
        track_mosaic(self.run.clone(), &self.scene.sequence.timestamps, &config).map_err(|e| e.to_string())
    }

    fn truth_in_panorama(&self) -> Vec<divetrack::registration::Point> {
        let (ox, oy) = self.run.panorama().origin_offset;
        self.scene
            .trajectory_in_reference(self.run.reference_index())
            .into_iter()
            .map(|p| divetrack::registration::Point::new(p.x + ox, p.y + oy))
            .collect()
    }
}

#[wasm_bindgen]
impl Demo {
    /// Generates the scene and registers it; `shake` is clamped to [`MAX_SHAKE`].
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, shake: u32) -> Result<Demo, JsError> {
        Demo::build(seed as u64, shake).map_err(js_err)
    }

    pub fn frame_count(&self) -> usize {
        self.scene.sequence.len()
    }

    pub fn frame_width(&self) -> u32 {
        self.spec.frame_size.0
    }

    pub fn frame_height(&self) -> u32 {
        self.spec.frame_size.1
    }

    pub fn panorama_width(&self) -> u32 {
        self.run.panorama().width()
    }

    pub fn panorama_height(&self) -> u32 {
        self.run.panorama().height()
    }

    pub fn panorama_rgba(&self) -> Vec<u8> {
        rgba(&self.run.panorama().image)
    }

    /// Water surface row in panorama pixels.
    pub fn water_line(&self) -> f64 {
        self.config.water_line_y.unwrap_or_default()
    }

    pub fn frame_rgba(&self, k: usize) -> Vec<u8> {
        self.scene.sequence.frames.get(k).map(rgba).unwrap_or_default()
    }

    /// Estimated camera displacement, flattened `x0, y0, x1, y1, ...`.
    pub fn displacement(&self) -> Vec<f64> {
        self.run.displacement.iter().flat_map(|p| [p.x, p.y]).collect()
    }

    /// True camera displacement relative to the reference frame, same layout.
    pub fn truth_displacement(&self) -> Vec<f64> {
        let c = self.scene.truth_path[self.run.reference_index()];
        self.scene.truth_path.iter().flat_map(|p| [p.x - c.x, p.y - c.y]).collect()
    }

    pub fn displacement_rmse(&self) -> f64 {
        score(&self.run.displacement, &self.scene.truth_path, self.run.reference_index()).unwrap_or(f64::NAN)
    }

    pub fn never_written_fraction(&self) -> f64 {
        self.run.panorama().never_written_fraction()
    }

    /// Frame `k` with pixels inside the HSV range painted magenta.
    pub fn threshold_rgba(
        &self,
        k: usize,
        h_low: f64,
        h_high: f64,
        s_low: f64,
        s_high: f64,
        v_low: f64,
        v_high: f64,
    ) -> Result<Vec<u8>, JsError> {
        let range = hsv(h_low, h_high, s_low, s_high, v_low, v_high).map_err(js_err)?;
        let frame = self.scene.sequence.frames.get(k).ok_or_else(|| js_err(format!("no frame {k}")))?;
        let mask = hsv_threshold(frame, &range);
        let mut out = frame.clone();
        for y in 0..out.height() {
            for x in 0..out.width() {
                if mask.get(x, y) {
                    out.set(x, y, [255, 0, 255]);
                }
            }
        }
        Ok(rgba(&out))
    }

    /// Tracks the subject and returns the trajectory plot as SVG markup.
    #[allow(clippy::too_many_arguments)]
    pub fn track(
        &self,
        h_low: f64,
        h_high: f64,
        s_low: f64,
        s_high: f64,
        v_low: f64,
        v_high: f64,
        window: usize,
    ) -> Result<TrackView, JsError> {
        let range = hsv(h_low, h_high, s_low, s_high, v_low, v_high).map_err(js_err)?;
        let run = self.tracked(range, window).map_err(js_err)?;
        Ok(TrackView::new(&run, &self.truth_in_panorama()))
    }
}

fn hsv(h_low: f64, h_high: f64, s_low: f64, s_high: f64, v_low: f64, v_high: f64) -> Result<HsvRange, String> {
    let r = HsvRange {
        h_low,
        h_high,
        s_low,
        s_high,
        v_low,
        v_high,
    };
    r.validate().map_err(|e| e.to_string())?;
    Ok(r)
}

#[wasm_bindgen]
pub struct TrackView {
    svg: String,
    report: String,
    raw_rmse: f64,
    smoothed_rmse: f64,
    valid: usize,
}

impl TrackView {
    pub fn new(run: &TrackRun, truth: &[divetrack::registration::Point]) -> TrackView {
        use divetrack::registration::Point;
        let traj = &run.trajectory;
        let raw: Vec<Option<Point>> = traj
            .samples
            .iter()
            .map(|s| (s.valid && !s.interpolated).then(|| Point::new(s.x, s.y)))
            .collect();
        let smoothed: Vec<Option<Point>> = traj
            .smoothed
            .iter()
            .zip(&raw)
            .map(|(p, r)| r.and(p.map(|(x, y)| Point::new(x, y))))
            .collect();
        TrackView {
            svg: export_plot(traj),
            report: run.report(),
            raw_rmse: score_traj(&raw, truth).unwrap_or(f64::NAN),
            smoothed_rmse: score_traj(&smoothed, truth).unwrap_or(f64::NAN),
            valid: traj.valid_count(),
        }
    }
}

#[wasm_bindgen]
impl TrackView {
    pub fn svg(&self) -> String {
        self.svg.clone()
    }

    /// `key=value` metrics report.
    pub fn report(&self) -> String {
        self.report.clone()
    }

    /// Barycentre RMSE against ground truth, px.
    pub fn raw_rmse(&self) -> f64 {
        self.raw_rmse
    }

    pub fn smoothed_rmse(&self) -> f64 {
        self.smoothed_rmse
    }

    pub fn valid(&self) -> usize {
        self.valid
    }
}
