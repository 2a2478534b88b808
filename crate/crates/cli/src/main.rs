use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use divetrack::config::PipelineConfig;
use divetrack::ingest::{load_sequence, IngestError};
use divetrack::pipeline::{
    annotate, compare_detectors, detector_csv, displacement_csv, grayscale_frames, run_mosaic,
    run_track, PipelineError,
};
use divetrack::raster::{write_counts_png, RasterError};
use divetrack::synth::{generate, write_scene, SceneSpec, SynthError};
use divetrack::tracking::{apex, import_trajectory, metrics, TrackingError};

const EXIT_USAGE: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_EMPTY: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "divetrack", version, about = "Panorama registration and barycentre tracking for hand-held dive video")]
struct Cli {
    /// Print the effective configuration and exit.
    #[arg(long, global = true)]
    dump_config: bool,

    #[command(flatten)]
    opts: PipelineOpts,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Default)]
struct PipelineOpts {
    /// `key = value` config file; flags override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker thread cap (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Frame rate of the input directory.
    #[arg(long, global = true)]
    fps: Option<f64>,
    #[arg(long, global = true)]
    sample_fps: Option<f64>,
    /// fast | harris | doh
    #[arg(long, global = true)]
    detector: Option<String>,
    #[arg(long, global = true)]
    ratio: Option<f64>,
    #[arg(long, global = true)]
    ransac_iters: Option<usize>,
    #[arg(long, global = true)]
    ransac_tol: Option<f64>,
    /// middle | first | N
    #[arg(long, global = true)]
    reference: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    h_low: Option<f64>,
    #[arg(long, global = true)]
    h_high: Option<f64>,
    #[arg(long, global = true)]
    s_low: Option<f64>,
    #[arg(long, global = true)]
    s_high: Option<f64>,
    #[arg(long, global = true)]
    v_low: Option<f64>,
    #[arg(long, global = true)]
    v_high: Option<f64>,
    #[arg(long, global = true)]
    guard_dilate: Option<u32>,
    #[arg(long, global = true)]
    min_area: Option<usize>,
    #[arg(long, global = true)]
    max_gap: Option<usize>,
    /// Odd moving-average window in samples.
    #[arg(long, global = true)]
    window: Option<usize>,
    /// Panorama row of the water surface.
    #[arg(long, global = true)]
    water_line: Option<f64>,
    #[arg(long, global = true)]
    px_per_meter: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Register frames and write panorama.png, coverage.png and the camera path.
    Mosaic {
        input: PathBuf,
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
    },
    /// Full pipeline: trajectory.csv, plot.svg and metrics.txt.
    Track {
        input: PathBuf,
        #[arg(short, long, default_value = "out")]
        output: PathBuf,
        /// Also write one annotated PNG per frame.
        #[arg(long)]
        annotate: bool,
    },
    /// Mean matched-feature count per detector over consecutive pairs.
    CompareDetectors {
        input: PathBuf,
        /// Write the CSV here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Dive metrics from an exported trajectory CSV.
    Metrics { trajectory: PathBuf },
    /// Write a synthetic scene with ground truth.
    Synth {
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = Scene::Pan)]
        scene: Scene,
        /// Shake amplitude for the jitter scene, px.
        #[arg(long, default_value_t = 3)]
        jitter: u32,
    },
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Scene {
    Pan,
    Jitter,
    Still,
}

/// An error tagged with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

fn fail(code: u8) -> impl FnOnce(anyhow::Error) -> Failure {
    move |error| Failure { code, error }
}

fn usage(e: impl Into<anyhow::Error>) -> Failure {
    fail(EXIT_USAGE)(e.into())
}

fn input(e: impl Into<anyhow::Error>) -> Failure {
    fail(EXIT_INPUT)(e.into())
}

fn pipeline_failure(e: PipelineError) -> Failure {
    let code = match &e {
        PipelineError::Config(_) => EXIT_USAGE,
        PipelineError::Tracking(TrackingError::NoValidSamples) => EXIT_EMPTY,
        _ => EXIT_INPUT,
    };
    fail(code)(e.into())
}

fn build_config(opts: &PipelineOpts) -> Result<PipelineConfig, Failure> {
    let mut c = PipelineConfig::default();
    if let Some(path) = &opts.config {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))
            .map_err(usage)?;
        c.apply_text(&text).map_err(usage)?;
    }
    let mut set = |key: &str, v: Option<String>| -> Result<(), Failure> {
        match v {
            Some(v) => c.set(key, &v).map_err(usage),
            None => Ok(()),
        }
    };
    let s = |v: Option<f64>| v.map(|v| v.to_string());
    set("threads", opts.threads.map(|v| v.to_string()))?;
    set("source_fps", s(opts.fps))?;
    set("sample_fps", s(opts.sample_fps))?;
    set("detector", opts.detector.clone())?;
    set("ratio", s(opts.ratio))?;
    set("ransac_iters", opts.ransac_iters.map(|v| v.to_string()))?;
    set("ransac_tol", s(opts.ransac_tol))?;
    set("reference", opts.reference.clone())?;
    set("seed", opts.seed.map(|v| v.to_string()))?;
    set("h_low", s(opts.h_low))?;
    set("h_high", s(opts.h_high))?;
    set("s_low", s(opts.s_low))?;
    set("s_high", s(opts.s_high))?;
    set("v_low", s(opts.v_low))?;
    set("v_high", s(opts.v_high))?;
    set("guard_dilate", opts.guard_dilate.map(|v| v.to_string()))?;
    set("min_area", opts.min_area.map(|v| v.to_string()))?;
    set("max_gap", opts.max_gap.map(|v| v.to_string()))?;
    set("window", opts.window.map(|v| v.to_string()))?;
    set("water_line_y", s(opts.water_line))?;
    set("px_per_meter", s(opts.px_per_meter))?;
    c.validate().map_err(usage)?;
    Ok(c)
}

fn write(path: &Path, contents: &str) -> Result<(), Failure> {
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(input)
}

fn out_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(input)
}

fn load(dir: &Path, c: &PipelineConfig) -> Result<divetrack::ingest::FrameSequence, Failure> {
    let seq = load_sequence(dir, c.source_fps, c.sample_fps).map_err(|e| match e {
        IngestError::BadRate { .. } => usage(e),
        e => input(e),
    })?;
    for w in &seq.warnings {
        eprintln!("warning: {w}");
    }
    Ok(seq)
}

fn raster(e: RasterError) -> Failure {
    input(e)
}

fn cmd_mosaic(input_dir: &Path, output: &Path, c: &PipelineConfig) -> Result<(), Failure> {
    let seq = load(input_dir, c)?;
    let run = run_mosaic(&seq, c).map_err(pipeline_failure)?;
    out_dir(output)?;
    let pano = run.panorama();
    pano.image.write(output.join("panorama.png")).map_err(raster)?;
    write_counts_png(pano.width(), pano.height(), &pano.coverage, output.join("coverage.png")).map_err(raster)?;
    write(&output.join("camera_path.csv"), &run.registration.chained.path.to_csv())?;
    write(&output.join("camera_displacement.csv"), &displacement_csv(&run.displacement))?;
    for w in &run.registration.chained.warnings {
        eprintln!("warning: {w}");
    }
    println!(
        "panorama {}x{}, {} frames, reference {}, never written {:.2}%",
        pano.width(),
        pano.height(),
        seq.len(),
        run.reference_index(),
        100.0 * pano.never_written_fraction()
    );
    Ok(())
}

fn cmd_track(input_dir: &Path, output: &Path, annotate_frames: bool, c: &PipelineConfig) -> Result<(), Failure> {
    let seq = load(input_dir, c)?;
    let run = run_track(&seq, c).map_err(pipeline_failure)?;
    out_dir(output)?;
    let pano = run.mosaic.panorama();
    pano.image.write(output.join("panorama.png")).map_err(raster)?;
    write(&output.join("camera_path.csv"), &run.mosaic.registration.chained.path.to_csv())?;
    write(&output.join("trajectory.csv"), &divetrack::tracking::export_trajectory(&run.trajectory))?;
    write(&output.join("plot.svg"), &divetrack::tracking::export_plot(&run.trajectory))?;
    let report = run.report();
    write(&output.join("metrics.txt"), &report)?;
    if let Err(e) = &run.metrics {
        eprintln!("warning: {e}");
    }
    if annotate_frames {
        let dir = output.join("annotated");
        out_dir(&dir)?;
        for (i, f) in run.mosaic.mosaic.frames.iter().enumerate() {
            annotate(f, pano, run.subjects[i].as_ref())
                .write(dir.join(format!("frame_{:06}.png", i + 1)))
                .map_err(raster)?;
        }
    }
    print!("{report}");
    Ok(())
}

fn cmd_compare(input_dir: &Path, output: Option<&Path>, c: &PipelineConfig) -> Result<(), Failure> {
    let seq = load(input_dir, c)?;
    let gray = grayscale_frames(&seq);
    let reports = compare_detectors(&gray, &c.detector, c.registration.ratio).map_err(pipeline_failure)?;
    let csv = detector_csv(&reports);
    match output {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_metrics(path: &Path, c: &PipelineConfig) -> Result<(), Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input)?;
    let traj = import_trajectory(&text).map_err(input)?;
    let water = c
        .water_line_y
        .ok_or_else(|| usage(anyhow::anyhow!("metrics needs --water-line (or water_line_y in the config)")))?;
    let top = apex(&traj, water).map_err(|e| match e {
        TrackingError::NoValidSamples => fail(EXIT_EMPTY)(e.into()),
        e => input(e),
    })?;
    match metrics(&traj, water, c.px_per_meter) {
        Ok(m) => print!("{}", m.report()),
        Err(e) => {
            eprintln!("warning: {e}");
            let mut s = String::new();
            writeln!(s, "max_height_px={:.4}", top.height).unwrap();
            s.push_str("max_height_m=none\n");
            writeln!(s, "apex_time_s={:.4}", top.time).unwrap();
            writeln!(s, "no_apex={}", top.no_apex).unwrap();
            s.push_str("entry_x_px=none\nentry_time_s=none\nlateral_deviation_px=none\nlateral_deviation_m=none\n");
            print!("{s}");
        }
    }
    Ok(())
}

fn cmd_synth(output: &Path, scene: Scene, jitter: u32, c: &PipelineConfig) -> Result<(), Failure> {
    let seed = c.registration.seed;
    let spec = match scene {
        Scene::Pan => SceneSpec::pan(seed),
        Scene::Jitter => SceneSpec::jitter(seed, jitter),
        Scene::Still => SceneSpec::still(seed),
    };
    let scene = generate(&spec).map_err(|e| match e {
        SynthError::SpecOutOfBounds(_) => usage(e),
        e => input(e),
    })?;
    write_scene(&scene, output).map_err(input)?;
    println!(
        "{} frames of {}x{} written to {}; water line at background y={}",
        scene.sequence.len(),
        spec.frame_size.0,
        spec.frame_size.1,
        output.display(),
        spec.water_line_y
    );
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    let config = build_config(&cli.opts)?;
    if cli.dump_config {
        print!("{}", config.dump());
        return Ok(());
    }
    if config.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build_global()
            .map_err(usage)?;
    }
    match &cli.command {
        None => Err(usage(anyhow::anyhow!("no subcommand given (see --help)"))),
        Some(Command::Mosaic { input, output }) => cmd_mosaic(input, output, &config),
        Some(Command::Track {
            input,
            output,
            annotate,
        }) => cmd_track(input, output, *annotate, &config),
        Some(Command::CompareDetectors { input, output }) => cmd_compare(input, output.as_deref(), &config),
        Some(Command::Metrics { trajectory }) => cmd_metrics(trajectory, &config),
        Some(Command::Synth { output, scene, jitter }) => cmd_synth(output, *scene, *jitter, &config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}
