//! Trajectory assembly, zero-phase smoothing and dive metrics.

use std::fmt::Write as _;

use thiserror::Error;

pub const DEFAULT_MAX_GAP: usize = 3;
pub const DEFAULT_WINDOW: usize = 5;

pub const CSV_HEADER: &str = "frame,t_s,x_px,y_px,valid,interpolated,x_smooth,y_smooth,area_px";

#[derive(Clone, Debug, Error, PartialEq)]
pub enum TrackingError {
    #[error("trajectory has no valid samples")]
    NoValidSamples,
    #[error("smoothing window must be odd and at least 1, got {0}")]
    BadWindow(usize),
    #[error("samples are not ordered by frame index (at position {0})")]
    Unordered(usize),
    #[error("trajectory never crosses the water line after the apex")]
    NoEntry,
    #[error("water line y={0} is not a finite coordinate")]
    BadWaterLine(f64),
    #[error("trajectory line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Subject barycentre in one frame. When `valid` is false the position and
/// area are placeholders.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct BarycenterSample {
    pub frame_index: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub valid: bool,
    /// Filled in by [`assemble`] rather than measured.
    pub interpolated: bool,
    pub area: f64,
}

impl BarycenterSample {
    pub fn measured(frame_index: usize, t: f64, x: f64, y: f64, area: f64) -> Self {
        Self {
            frame_index,
            t,
            x,
            y,
            valid: true,
            interpolated: false,
            area,
        }
    }

    pub fn missing(frame_index: usize, t: f64) -> Self {
        Self {
            frame_index,
            t,
            x: 0.0,
            y: 0.0,
            valid: false,
            interpolated: false,
            area: 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<BarycenterSample>,
    /// Filtered position per sample; `None` where the sample is invalid.
    pub smoothed: Vec<Option<(f64, f64)>>,
}

impl Trajectory {
    /// Wraps samples with the identity filter.
    pub fn unsmoothed(samples: Vec<BarycenterSample>) -> Trajectory {
        let smoothed = samples.iter().map(|s| s.valid.then_some((s.x, s.y))).collect();
        Trajectory { samples, smoothed }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.samples.iter().filter(|s| s.valid).count()
    }
}

/// Bridges short detection gaps by linear interpolation between the valid
/// neighbours. Runs longer than `max_gap`, and runs at either end, stay invalid.
pub fn assemble(mut samples: Vec<BarycenterSample>, max_gap: usize) -> Result<Trajectory, TrackingError> {
    for (i, w) in samples.windows(2).enumerate() {
        if w[1].frame_index <= w[0].frame_index {
            return Err(TrackingError::Unordered(i + 1));
        }
    }
    if !samples.iter().any(|s| s.valid) {
        return Err(TrackingError::NoValidSamples);
    }
    let mut i = 0;
    while i < samples.len() {
        if samples[i].valid {
            i += 1;
            continue;
        }
        let start = i;
        while i < samples.len() && !samples[i].valid {
            i += 1;
        }
        let run = i - start;
        if start == 0 || i == samples.len() || run > max_gap {
            continue;
        }
        let (a, b) = (samples[start - 1], samples[i]);
        for s in &mut samples[start..i] {
            let f = (s.t - a.t) / (b.t - a.t);
            s.x = a.x + f * (b.x - a.x);
            s.y = a.y + f * (b.y - a.y);
            s.area = a.area + f * (b.area - a.area);
            s.valid = true;
            s.interpolated = true;
        }
    }
    Ok(Trajectory::unsmoothed(samples))
}

/// Centred moving average over valid samples. The window radius shrinks
/// symmetrically near either end so no lag is introduced.
pub fn smooth(traj: &Trajectory, window: usize) -> Result<Trajectory, TrackingError> {
    if window == 0 || window % 2 == 0 {
        return Err(TrackingError::BadWindow(window));
    }
    let r = window / 2;
    let n = traj.samples.len();
    let smoothed = (0..n)
        .map(|i| {
            if !traj.samples[i].valid {
                return None;
            }
            let rr = r.min(i).min(n - 1 - i);
            let c = traj.samples[i];
            // Averaging offsets from the centre keeps constant runs bit-exact.
            let (mut dx, mut dy, mut k) = (0.0, 0.0, 0usize);
            for s in traj.samples[i - rr..=i + rr].iter().filter(|s| s.valid) {
                dx += s.x - c.x;
                dy += s.y - c.y;
                k += 1;
            }
            Some((c.x + dx / k as f64, c.y + dy / k as f64))
        })
        .collect();
    Ok(Trajectory {
        samples: traj.samples.clone(),
        smoothed,
    })
}

/// Height above the water line; image y grows downward.
pub fn height_above(water_line_y: f64, y: f64) -> f64 {
    water_line_y - y
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Apex {
    pub index: usize,
    pub time: f64,
    pub height: f64,
    /// The smoothed series had no interior maximum.
    pub no_apex: bool,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct DiveMetrics {
    pub max_height: f64,
    pub max_height_m: Option<f64>,
    pub apex_time: f64,
    pub no_apex: bool,
    pub entry_x: f64,
    pub entry_time: f64,
    pub lateral_deviation: f64,
    pub lateral_deviation_m: Option<f64>,
}

fn smoothed_points(traj: &Trajectory) -> Vec<(usize, f64, f64, f64)> {
    traj.samples
        .iter()
        .zip(&traj.smoothed)
        .enumerate()
        .filter_map(|(i, (s, p))| p.map(|(x, y)| (i, s.t, x, y)))
        .collect()
}

/// Highest smoothed sample. A maximum on the first or last valid sample is not
/// interior, so the apex falls back to the first sample and is flagged.
pub fn apex(traj: &Trajectory, water_line_y: f64) -> Result<Apex, TrackingError> {
    if !water_line_y.is_finite() {
        return Err(TrackingError::BadWaterLine(water_line_y));
    }
    let pts = smoothed_points(traj);
    let first = *pts.first().ok_or(TrackingError::NoValidSamples)?;
    let mut best = 0;
    for (k, p) in pts.iter().enumerate() {
        if height_above(water_line_y, p.3) > height_above(water_line_y, pts[best].3) {
            best = k;
        }
    }
    let interior = best != 0 && best != pts.len() - 1;
    let chosen = if interior { pts[best] } else { first };
    Ok(Apex {
        index: chosen.0,
        time: chosen.1,
        height: height_above(water_line_y, pts[best].3),
        no_apex: !interior,
    })
}

/// Maximum height, apex time, water entry and take-off lateral drift.
pub fn metrics(
    traj: &Trajectory,
    water_line_y: f64,
    px_per_meter: Option<f64>,
) -> Result<DiveMetrics, TrackingError> {
    let top = apex(traj, water_line_y)?;
    let h = |y: f64| height_above(water_line_y, y);
    let mut entry = None;
    for i in top.index..traj.len().saturating_sub(1) {
        let (Some(a), Some(b)) = (traj.smoothed[i], traj.smoothed[i + 1]) else {
            continue;
        };
        let (ha, hb) = (h(a.1), h(b.1));
        if ha > 0.0 && hb <= 0.0 {
            let f = ha / (ha - hb);
            let (ta, tb) = (traj.samples[i].t, traj.samples[i + 1].t);
            entry = Some((a.0 + f * (b.0 - a.0), ta + f * (tb - ta)));
            break;
        }
    }
    let (entry_x, entry_time) = entry.ok_or(TrackingError::NoEntry)?;
    let pts = smoothed_points(traj);
    let x0 = pts[0].2;
    let lateral_deviation = pts
        .iter()
        .filter(|p| p.1 <= top.time)
        .map(|p| (p.2 - x0).abs())
        .fold(0.0, f64::max);
    let scale = px_per_meter.filter(|s| *s > 0.0);
    Ok(DiveMetrics {
        max_height: top.height,
        max_height_m: scale.map(|s| top.height / s),
        apex_time: top.time,
        no_apex: top.no_apex,
        entry_x,
        entry_time,
        lateral_deviation,
        lateral_deviation_m: scale.map(|s| lateral_deviation / s),
    })
}

impl DiveMetrics {
    /// Fixed-key `key=value` lines.
    pub fn report(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "none".to_string(), |v| format!("{v:.4}"));
        format!(
            "max_height_px={:.4}\nmax_height_m={}\napex_time_s={:.4}\nno_apex={}\nentry_x_px={:.4}\nentry_time_s={:.4}\nlateral_deviation_px={:.4}\nlateral_deviation_m={}\n",
            self.max_height,
            opt(self.max_height_m),
            self.apex_time,
            self.no_apex,
            self.entry_x,
            self.entry_time,
            self.lateral_deviation,
            opt(self.lateral_deviation_m),
        )
    }
}

/// CSV with header [`CSV_HEADER`]; floats use shortest round-trip formatting.
pub fn export_trajectory(traj: &Trajectory) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for (s, p) in traj.samples.iter().zip(&traj.smoothed) {
        let (xs, ys) = p.map_or((String::new(), String::new()), |(x, y)| (x.to_string(), y.to_string()));
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            s.frame_index, s.t, s.x, s.y, s.valid as u8, s.interpolated as u8, xs, ys, s.area
        )
        .unwrap();
    }
    out
}

pub fn import_trajectory(text: &str) -> Result<Trajectory, TrackingError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == CSV_HEADER => {}
        _ => {
            return Err(TrackingError::Parse {
                line: 1,
                reason: "missing trajectory header".into(),
            })
        }
    }
    let mut samples = Vec::new();
    let mut smoothed = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |reason: String| TrackingError::Parse { line: i + 1, reason };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 9 {
            return Err(bad(format!("expected 9 fields, got {}", f.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        let flag = |s: &str| match s {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(bad(format!("`{s}` is not 0 or 1"))),
        };
        samples.push(BarycenterSample {
            frame_index: f[0].parse().map_err(|e| bad(format!("`{}`: {e}", f[0])))?,
            t: num(f[1])?,
            x: num(f[2])?,
            y: num(f[3])?,
            valid: flag(f[4])?,
            interpolated: flag(f[5])?,
            area: num(f[8])?,
        });
        smoothed.push(match (f[6], f[7]) {
            ("", "") => None,
            (x, y) => Some((num(x)?, num(y)?)),
        });
    }
    Ok(Trajectory { samples, smoothed })
}

const PLOT_W: f64 = 640.0;
const PLOT_H: f64 = 360.0;
const MARGIN: f64 = 48.0;

/// Vertical position against time: raw samples as dots, the filtered series as
/// a line with dots. Up in the plot is up in the image.
pub fn export_plot(traj: &Trajectory) -> String {
    let raw: Vec<(f64, f64)> = traj.samples.iter().filter(|s| s.valid).map(|s| (s.t, s.y)).collect();
    let smooth: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .zip(&traj.smoothed)
        .filter_map(|(s, p)| p.map(|(_, y)| (s.t, y)))
        .collect();
    let all = raw.iter().chain(&smooth);
    let (mut t0, mut t1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(t, y) in all {
        t0 = t0.min(t);
        t1 = t1.max(t);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !t0.is_finite() {
        (t0, t1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if t1 - t0 < 1e-9 {
        t1 = t0 + 1.0;
    }
    if y1 - y0 < 1e-9 {
        y1 = y0 + 1.0;
    }
    let px = |t: f64| MARGIN + (t - t0) / (t1 - t0) * (PLOT_W - 2.0 * MARGIN);
    // Smaller image y is higher, so it maps to a smaller SVG y as well.
    let py = |y: f64| MARGIN + (y - y0) / (y1 - y0) * (PLOT_H - 2.0 * MARGIN);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_W}" height="{PLOT_H}" viewBox="0 0 {PLOT_W} {PLOT_H}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#).unwrap();
    let (l, r, t, b) = (MARGIN, PLOT_W - MARGIN, MARGIN, PLOT_H - MARGIN);
    writeln!(
        s,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" stroke="black" fill="none" stroke-width="1"/>"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">time (s) {t0:.2} to {t1:.2}</text>"#,
        PLOT_W / 2.0,
        PLOT_H - 12.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="12" y="{}" font-size="12" transform="rotate(-90 12 {})" text-anchor="middle">barycentre y (px) {y0:.1} to {y1:.1}</text>"#,
        PLOT_H / 2.0,
        PLOT_H / 2.0
    )
    .unwrap();
    writeln!(s, r#"<g id="raw" fill="steelblue">"#).unwrap();
    for &(tt, y) in &raw {
        writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5"/>"#, px(tt), py(y)).unwrap();
    }
    s.push_str("</g>\n");
    writeln!(s, r#"<g id="smoothed" fill="crimson" stroke="crimson">"#).unwrap();
    if !smooth.is_empty() {
        let pts: Vec<String> = smooth.iter().map(|&(tt, y)| format!("{:.2},{:.2}", px(tt), py(y))).collect();
        writeln!(s, r#"<polyline points="{}" fill="none" stroke-width="1.5"/>"#, pts.join(" ")).unwrap();
    }
    for &(tt, y) in &smooth {
        writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="1.5"/>"#, px(tt), py(y)).unwrap();
    }
    s.push_str("</g>\n");
    writeln!(
        s,
        r#"<g font-size="12"><circle cx="{}" cy="{}" r="3" fill="steelblue"/><text x="{}" y="{}">raw</text><circle cx="{}" cy="{}" r="3" fill="crimson"/><text x="{}" y="{}">smoothed</text></g>"#,
        r - 120.0,
        t - 20.0,
        r - 112.0,
        t - 16.0,
        r - 60.0,
        t - 20.0,
        r - 52.0,
        t - 16.0
    )
    .unwrap();
    s.push_str("</svg>\n");
    s
}
