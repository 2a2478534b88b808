//! HSV double-threshold colour filtering, background-mask subtraction, object
//! filtering and barycentre extraction.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::raster::{dilate, BinaryMask, ImageBuffer};
use crate::registration::Point;

pub const DEFAULT_GUARD_DILATE: u32 = 2;
pub const DEFAULT_MIN_AREA: usize = 50;

#[derive(Debug, Error, PartialEq)]
pub enum SegmentationError {
    #[error("mask geometries differ: {0:?} vs {1:?}")]
    GeometryMismatch((u32, u32), (u32, u32)),
    #[error("no component reaches the minimum area of {min_area} px")]
    NoSubject { min_area: usize },
    #[error("invalid HSV range: {0}")]
    BadRange(String),
}

/// Standard hexcone conversion; hue in degrees `[0, 360)`, saturation and value in `[0, 1]`.
/// Achromatic pixels report hue 0.
pub fn rgb_to_hsv(r: u8, g: u8, b: u8) -> (f64, f64, f64) {
    let (rf, gf, bf) = (r as f64 / 255.0, g as f64 / 255.0, b as f64 / 255.0);
    let max = rf.max(gf).max(bf);
    let min = rf.min(gf).min(bf);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta == 0.0 {
        return (0.0, s, v);
    }
    let h = if max == rf {
        60.0 * ((gf - bf) / delta)
    } else if max == gf {
        60.0 * ((bf - rf) / delta + 2.0)
    } else {
        60.0 * ((rf - gf) / delta + 4.0)
    };
    let h = if h < 0.0 { h + 360.0 } else { h };
    (if h >= 360.0 { h - 360.0 } else { h }, s, v)
}

/// Inverse of [`rgb_to_hsv`], rounded to 8 bits.
pub fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let h = h.rem_euclid(360.0) / 60.0;
    let c = v * s;
    let x = c * (1.0 - (h % 2.0 - 1.0).abs());
    let (r, g, b) = match h as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [r, g, b].map(|ch| ((ch + m) * 255.0).round().clamp(0.0, 255.0) as u8)
}

/// Per-channel acceptance intervals; `h_low > h_high` wraps through 0°.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct HsvRange {
    pub h_low: f64,
    pub h_high: f64,
    pub s_low: f64,
    pub s_high: f64,
    pub v_low: f64,
    pub v_high: f64,
}

impl Default for HsvRange {
    /// A loose skin-tone window; a starting point, expected to be tuned per video.
    fn default() -> Self {
        Self {
            h_low: 0.0,
            h_high: 45.0,
            s_low: 0.15,
            s_high: 0.9,
            v_low: 0.25,
            v_high: 1.0,
        }
    }
}

impl HsvRange {
    /// Accepts every colour.
    pub const FULL: HsvRange = HsvRange {
        h_low: 0.0,
        h_high: 360.0,
        s_low: 0.0,
        s_high: 1.0,
        v_low: 0.0,
        v_high: 1.0,
    };

    pub fn validate(&self) -> Result<(), SegmentationError> {
        let hue_ok = |h: f64| (0.0..=360.0).contains(&h);
        let unit_ok = |v: f64| (0.0..=1.0).contains(&v);
        if !hue_ok(self.h_low) || !hue_ok(self.h_high) {
            return Err(SegmentationError::BadRange(format!(
                "hue bounds {} / {} outside [0, 360]",
                self.h_low, self.h_high
            )));
        }
        if !(unit_ok(self.s_low) && unit_ok(self.s_high) && self.s_low <= self.s_high) {
            return Err(SegmentationError::BadRange(format!(
                "saturation bounds {} / {}",
                self.s_low, self.s_high
            )));
        }
        if !(unit_ok(self.v_low) && unit_ok(self.v_high) && self.v_low <= self.v_high) {
            return Err(SegmentationError::BadRange(format!(
                "value bounds {} / {}",
                self.v_low, self.v_high
            )));
        }
        Ok(())
    }

    pub fn contains_hue(&self, h: f64) -> bool {
        if self.h_low <= self.h_high {
            h >= self.h_low && h <= self.h_high
        } else {
            h >= self.h_low || h <= self.h_high
        }
    }

    pub fn contains(&self, (h, s, v): (f64, f64, f64)) -> bool {
        self.contains_hue(h)
            && s >= self.s_low
            && s <= self.s_high
            && v >= self.v_low
            && v <= self.v_high
    }

    pub fn accepts_rgb(&self, [r, g, b]: [u8; 3]) -> bool {
        self.contains(rgb_to_hsv(r, g, b))
    }
}

impl fmt::Display for HsvRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "h_low={} h_high={} s_low={} s_high={} v_low={} v_high={}",
            self.h_low, self.h_high, self.s_low, self.s_high, self.v_low, self.v_high
        )
    }
}

impl FromStr for HsvRange {
    type Err = SegmentationError;

    /// Parses whitespace- or comma-separated `key=value` pairs; missing keys keep defaults.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut range = HsvRange::default();
        for token in s.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
            let (k, v) = token
                .split_once('=')
                .ok_or_else(|| SegmentationError::BadRange(format!("expected key=value, got `{token}`")))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| SegmentationError::BadRange(format!("bad number in `{token}`")))?;
            match k.trim() {
                "h_low" => range.h_low = v,
                "h_high" => range.h_high = v,
                "s_low" => range.s_low = v,
                "s_high" => range.s_high = v,
                "v_low" => range.v_low = v,
                "v_high" => range.v_high = v,
                other => return Err(SegmentationError::BadRange(format!("unknown key `{other}`"))),
            }
        }
        range.validate()?;
        Ok(range)
    }
}

pub fn hsv_threshold(img: &ImageBuffer, range: &HsvRange) -> BinaryMask {
    BinaryMask::from_fn(img.width(), img.height(), |x, y| range.accepts_rgb(img.get(x, y)))
}

/// `frame_mask AND NOT dilate(bg_mask, guard_dilate)`.
pub fn subtract_background(
    frame_mask: &BinaryMask,
    bg_mask: &BinaryMask,
    guard_dilate: u32,
) -> Result<BinaryMask, SegmentationError> {
    if frame_mask.dimensions() != bg_mask.dimensions() {
        return Err(SegmentationError::GeometryMismatch(
            frame_mask.dimensions(),
            bg_mask.dimensions(),
        ));
    }
    let guard = dilate(bg_mask, guard_dilate);
    Ok(BinaryMask::from_fn(
        frame_mask.width(),
        frame_mask.height(),
        |x, y| frame_mask.get(x, y) && !guard.get(x, y),
    ))
}

/// An 8-connected foreground region.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub pixels: Vec<(u32, u32)>,
    pub area: usize,
    pub centroid: Point,
    /// Inclusive `(min_x, min_y, max_x, max_y)`.
    pub bbox: (u32, u32, u32, u32),
}

impl Component {
    fn from_pixels(mut pixels: Vec<(u32, u32)>) -> Component {
        pixels.sort_by_key(|&(x, y)| (y, x));
        let area = pixels.len();
        let (mut sx, mut sy) = (0.0, 0.0);
        let mut bbox = (u32::MAX, u32::MAX, 0, 0);
        for &(x, y) in &pixels {
            sx += x as f64;
            sy += y as f64;
            bbox.0 = bbox.0.min(x);
            bbox.1 = bbox.1.min(y);
            bbox.2 = bbox.2.max(x);
            bbox.3 = bbox.3.max(y);
        }
        Component {
            centroid: Point::new(sx / area as f64, sy / area as f64),
            pixels,
            area,
            bbox,
        }
    }
}

/// 8-connected labelling; components ordered by their first pixel in row-major scan.
pub fn connected_components(mask: &BinaryMask) -> Vec<Component> {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut seen = vec![false; w * h];
    let mut out = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if seen[start] || !mask.bits()[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut pixels = Vec::new();
        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            pixels.push((x as u32, y as u32));
            for ny in y.saturating_sub(1)..(y + 2).min(h) {
                for nx in x.saturating_sub(1)..(x + 2).min(w) {
                    let j = ny * w + nx;
                    if !seen[j] && mask.bits()[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        out.push(Component::from_pixels(pixels));
    }
    out
}

/// Object filtering: largest component of at least `min_area`; ties go to the
/// centroid nearest `previous`, then to scan order.
pub fn select_subject(
    components: &[Component],
    min_area: usize,
    previous: Option<Point>,
) -> Result<&Component, SegmentationError> {
    let mut best: Option<&Component> = None;
    for c in components.iter().filter(|c| c.area >= min_area) {
        best = match best {
            None => Some(c),
            Some(b) if c.area > b.area => Some(c),
            Some(b) if c.area == b.area => match previous {
                Some(p) if c.centroid.distance(p) < b.centroid.distance(p) => Some(c),
                _ => Some(b),
            },
            keep => keep,
        };
    }
    best.ok_or(SegmentationError::NoSubject { min_area })
}

/// Unweighted mean of the component's pixel coordinates.
pub fn barycenter(c: &Component) -> Point {
    c.centroid
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SegmentationParams {
    pub range: HsvRange,
    pub guard_dilate: u32,
    pub min_area: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            range: HsvRange::default(),
            guard_dilate: DEFAULT_GUARD_DILATE,
            min_area: DEFAULT_MIN_AREA,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hexcone_examples() {
        assert_eq!(rgb_to_hsv(255, 0, 0), (0.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv(128, 128, 128), (0.0, 0.0, 128.0 / 255.0));
        assert_eq!(rgb_to_hsv(0, 255, 255), (180.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv(0, 0, 0), (0.0, 0.0, 0.0));
        let (h, _, _) = rgb_to_hsv(255, 0, 128);
        assert!((h - (360.0 - 60.0 * 128.0 / 255.0)).abs() < 1e-9);
    }

    #[test]
    fn hsv_round_trip_is_close() {
        for &(h, s, v) in &[(20.0, 0.5, 0.8), (200.0, 0.7, 0.4), (330.0, 1.0, 1.0)] {
            let [r, g, b] = hsv_to_rgb(h, s, v);
            let (h2, s2, v2) = rgb_to_hsv(r, g, b);
            assert!((h - h2).abs() < 1.5 && (s - s2).abs() < 0.02 && (v - v2).abs() < 0.01);
        }
    }

    #[test]
    fn full_range_accepts_everything() {
        let img = ImageBuffer::from_fn(16, 16, |x, y| [(x * 16) as u8, (y * 16) as u8, (x * y) as u8]).unwrap();
        assert_eq!(hsv_threshold(&img, &HsvRange::FULL).count(), 256);
    }

    #[test]
    fn wrapped_hue_interval() {
        let r = HsvRange {
            h_low: 350.0,
            h_high: 10.0,
            ..HsvRange::FULL
        };
        assert!(r.contains((5.0, 0.5, 0.5)));
        assert!(r.contains((355.0, 0.5, 0.5)));
        assert!(!r.contains((180.0, 0.5, 0.5)));
    }

    #[test]
    fn skin_ellipse_on_blue_is_segmented_exactly() {
        let skin = hsv_to_rgb(20.0, 0.5, 0.8);
        let blue = hsv_to_rgb(220.0, 0.8, 0.6);
        let inside = |x: u32, y: u32| {
            let (dx, dy) = ((x as f64 - 20.0) / 9.0, (y as f64 - 15.0) / 6.0);
            dx * dx + dy * dy <= 1.0
        };
        let img = ImageBuffer::from_fn(40, 30, |x, y| if inside(x, y) { skin } else { blue }).unwrap();
        let range = HsvRange {
            h_low: 0.0,
            h_high: 40.0,
            ..HsvRange::FULL
        };
        assert_eq!(hsv_threshold(&img, &range), BinaryMask::from_fn(40, 30, inside));
    }

    #[test]
    fn range_parsing_and_validation() {
        let r: HsvRange = "h_low=350 h_high=10, s_low=0.2".parse().unwrap();
        assert_eq!((r.h_low, r.h_high, r.s_low, r.s_high), (350.0, 10.0, 0.2, 0.9));
        assert_eq!(r.to_string().parse::<HsvRange>().unwrap(), r);
        assert!("s_low=0.9 s_high=0.1".parse::<HsvRange>().is_err());
        assert!("hue=3".parse::<HsvRange>().is_err());
        assert!("h_low=400".parse::<HsvRange>().is_err());
    }

    fn blob(w: u32, h: u32, x0: u32, y0: u32, side: u32) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x0 + side && y >= y0 && y < y0 + side)
    }

    fn union(a: &BinaryMask, b: &BinaryMask) -> BinaryMask {
        BinaryMask::from_fn(a.width(), a.height(), |x, y| a.get(x, y) || b.get(x, y))
    }

    #[test]
    fn subtraction_cases() {
        let bg = blob(30, 30, 2, 2, 5);
        assert_eq!(subtract_background(&bg, &bg, 0).unwrap().count(), 0);

        let extra = blob(30, 30, 15, 15, 4);
        let frame = union(&bg, &extra);
        assert_eq!(subtract_background(&frame, &bg, 0).unwrap(), extra);

        let shifted = blob(30, 30, 3, 2, 5);
        assert_eq!(subtract_background(&shifted, &bg, 2).unwrap().count(), 0);
        assert!(subtract_background(&shifted, &bg, 0).unwrap().count() > 0);

        assert!(matches!(
            subtract_background(&bg, &BinaryMask::empty(29, 30), 0),
            Err(SegmentationError::GeometryMismatch(..))
        ));
    }

    /// Independent labelling: repeated 4-pass propagation of minimum labels.
    fn flood_labels(mask: &BinaryMask) -> Vec<Option<usize>> {
        let (w, h) = (mask.width() as i64, mask.height() as i64);
        let mut labels: Vec<Option<usize>> = mask
            .bits()
            .iter()
            .enumerate()
            .map(|(i, &b)| b.then_some(i))
            .collect();
        loop {
            let mut changed = false;
            for y in 0..h {
                for x in 0..w {
                    let i = (y * w + x) as usize;
                    let Some(mut l) = labels[i] else { continue };
                    for dy in -1..=1 {
                        for dx in -1..=1 {
                            let (nx, ny) = (x + dx, y + dy);
                            if nx >= 0 && ny >= 0 && nx < w && ny < h {
                                if let Some(n) = labels[(ny * w + nx) as usize] {
                                    l = l.min(n);
                                }
                            }
                        }
                    }
                    if Some(l) != labels[i] {
                        labels[i] = Some(l);
                        changed = true;
                    }
                }
            }
            if !changed {
                return labels;
            }
        }
    }

    #[test]
    fn component_examples() {
        assert!(connected_components(&BinaryMask::empty(5, 5)).is_empty());
        let two = union(&blob(20, 20, 1, 1, 3), &blob(20, 20, 10, 12, 3));
        let cs = connected_components(&two);
        assert_eq!(cs.iter().map(|c| c.area).collect::<Vec<_>>(), vec![9, 9]);
        assert_eq!(cs[0].bbox, (1, 1, 3, 3));
        let diag = BinaryMask::from_fn(8, 8, |x, y| x == y);
        assert_eq!(connected_components(&diag).len(), 1);
    }

    fn arb_mask() -> impl Strategy<Value = BinaryMask> {
        prop::collection::vec(prop::bool::weighted(0.35), 14 * 11)
            .prop_map(|bits| BinaryMask::new(14, 11, bits).unwrap())
    }

    proptest! {
        #[test]
        fn components_match_flood_fill(mask in arb_mask()) {
            let labels = flood_labels(&mask);
            let cs = connected_components(&mask);
            let mut distinct: Vec<usize> = labels.iter().flatten().copied().collect();
            distinct.sort();
            distinct.dedup();
            prop_assert_eq!(cs.len(), distinct.len());
            for c in &cs {
                let (x0, y0) = c.pixels[0];
                let l = labels[(y0 * 14 + x0) as usize];
                let expected = labels.iter().filter(|v| **v == l).count();
                prop_assert_eq!(c.area, expected);
                for &(x, y) in &c.pixels {
                    prop_assert_eq!(labels[(y * 14 + x) as usize], l);
                }
            }
            // Scan order of first pixels.
            let firsts: Vec<_> = cs.iter().map(|c| (c.pixels[0].1, c.pixels[0].0)).collect();
            let mut sorted = firsts.clone();
            sorted.sort();
            prop_assert_eq!(firsts, sorted);
        }

        #[test]
        fn subtraction_is_subset(a in arb_mask(), b in arb_mask(), g in 0u32..3) {
            prop_assert!(subtract_background(&a, &b, g).unwrap().is_subset_of(&a));
        }

        #[test]
        fn wider_range_is_superset(
            pixels in prop::collection::vec(any::<[u8; 3]>(), 64),
            h0 in 0.0f64..180.0, dh in 0.0f64..100.0, s0 in 0.0f64..0.5, v0 in 0.0f64..0.5,
        ) {
            let img = ImageBuffer::new(8, 8, pixels).unwrap();
            let narrow = HsvRange { h_low: h0, h_high: h0 + dh, s_low: s0 + 0.2, s_high: 0.9, v_low: v0 + 0.2, v_high: 0.9 };
            let wide = HsvRange { h_low: h0, h_high: (h0 + dh + 40.0).min(360.0), s_low: s0, s_high: 1.0, v_low: v0, v_high: 1.0 };
            let m = hsv_threshold(&img, &narrow);
            prop_assert!(m.is_subset_of(&hsv_threshold(&img, &wide)));
            // Thresholding an already-thresholded image keeps the accepted set.
            let kept = ImageBuffer::from_fn(8, 8, |x, y| if m.get(x, y) { img.get(x, y) } else { [0, 0, 0] }).unwrap();
            let again = hsv_threshold(&kept, &narrow);
            let both = BinaryMask::from_fn(8, 8, |x, y| again.get(x, y) && m.get(x, y));
            prop_assert_eq!(both, m);
        }

        #[test]
        fn barycenter_translation_equivariance(mask in arb_mask(), dx in 0u32..10, dy in 0u32..10) {
            let moved = BinaryMask::from_fn(24, 21, |x, y| x >= dx && y >= dy && x - dx < 14 && y - dy < 11 && mask.get(x - dx, y - dy));
            for (a, b) in connected_components(&mask).iter().zip(connected_components(&moved).iter()) {
                let (p, q) = (barycenter(a), barycenter(b));
                prop_assert!((p.x + dx as f64 - q.x).abs() < 1e-9 && (p.y + dy as f64 - q.y).abs() < 1e-9);
                prop_assert!(p.x >= a.bbox.0 as f64 && p.x <= a.bbox.2 as f64);
                prop_assert!(p.y >= a.bbox.1 as f64 && p.y <= a.bbox.3 as f64);
            }
        }
    }

    #[test]
    fn subject_selection() {
        let mut mask = blob(60, 60, 20, 20, 20);
        for i in 0..5 {
            mask.set(2 + i * 10, 2, true);
            mask.set(2 + i * 10, 3, true);
            mask.set(3 + i * 10, 2, true);
            mask.set(3 + i * 10, 3, true);
            mask.set(4 + i * 10, 3, true);
        }
        let cs = connected_components(&mask);
        assert_eq!(cs.len(), 6);
        assert_eq!(select_subject(&cs, 50, None).unwrap().area, 400);

        let pair = union(&blob(60, 60, 2, 30, 8), &blob(60, 60, 40, 30, 8));
        let cs = connected_components(&pair);
        let left = select_subject(&cs, 50, Some(Point::new(10.0, 30.0))).unwrap();
        assert_eq!(left.bbox.0, 2);
        let right = select_subject(&cs, 50, Some(Point::new(50.0, 30.0))).unwrap();
        assert_eq!(right.bbox.0, 40);
        assert_eq!(select_subject(&cs, 50, None).unwrap().bbox.0, 2);
        assert_eq!(
            select_subject(&cs, 65, None),
            Err(SegmentationError::NoSubject { min_area: 65 })
        );
    }

    #[test]
    fn barycenter_examples() {
        let rect = connected_components(&BinaryMask::from_fn(30, 30, |x, y| x < 10 && y < 20));
        assert_eq!(barycenter(&rect[0]), Point::new(4.5, 9.5));
        let dot = connected_components(&BinaryMask::from_fn(10, 10, |x, y| (x, y) == (7, 3)));
        assert_eq!(barycenter(&dot[0]), Point::new(7.0, 3.0));
        let l_shape = [(2, 1), (2, 2), (2, 3), (2, 4), (3, 4)];
        let mask = BinaryMask::from_fn(8, 8, |x, y| l_shape.contains(&(x, y)));
        let c = &connected_components(&mask)[0];
        let (sx, sy) = l_shape.iter().fold((0, 0), |(a, b), &(x, y)| (a + x, b + y));
        assert_eq!(barycenter(c), Point::new(sx as f64 / 5.0, sy as f64 / 5.0));
    }
}
