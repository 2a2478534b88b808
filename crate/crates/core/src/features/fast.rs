use super::{require_size, suppress_3x3, Detector, FeatureError, Keypoint, UNIT_SCALE};
use crate::raster::GrayImage;

/// Bresenham circle of radius 3, clockwise from 12 o'clock.
pub const CIRCLE_OFFSETS: [(i32, i32); 16] = [
    (0, -3),
    (1, -3),
    (2, -2),
    (3, -1),
    (3, 0),
    (3, 1),
    (2, 2),
    (1, 3),
    (0, 3),
    (-1, 3),
    (-2, 2),
    (-3, 1),
    (-3, 0),
    (-3, -1),
    (-2, -2),
    (-1, -3),
];

const ARC_LENGTH: usize = 9;
const BORDER: u32 = 3;

/// FAST-9 segment test at `(x, y)`.
///
/// Returns the score of the qualifying arc (sum of absolute differences to
/// the centre over its longest contiguous run) or `None` if no run of nine
/// consistently brighter or darker pixels exists.
pub fn segment_test(img: &GrayImage, x: u32, y: u32, threshold: f64) -> Option<f64> {
    let centre = img.get(x, y);
    let mut class = [0i8; 16];
    let mut diff = [0.0; 16];
    for (i, &(dx, dy)) in CIRCLE_OFFSETS.iter().enumerate() {
        let v = img.get((x as i32 + dx) as u32, (y as i32 + dy) as u32);
        diff[i] = (v - centre).abs();
        class[i] = if v > centre + threshold {
            1
        } else if v < centre - threshold {
            -1
        } else {
            0
        };
    }
    if class.iter().all(|&c| c == class[0]) {
        return (class[0] != 0).then(|| diff.iter().sum());
    }
    // Walk twice around the circle, starting after a class change so runs
    // that wrap through index 0 are seen whole.
    let start = (0..16).find(|&i| class[i] != class[(i + 15) % 16])?;
    let mut best: Option<(usize, f64)> = None;
    let mut run_len = 0;
    let mut run_sum = 0.0;
    for k in 0..=16 {
        let i = (start + k) % 16;
        let continues = k < 16 && run_len > 0 && class[i] == class[(i + 15) % 16];
        if !continues {
            if run_len >= ARC_LENGTH && class[(i + 15) % 16] != 0 && best.is_none_or(|(l, _)| run_len > l) {
                best = Some((run_len, run_sum));
            }
            run_len = 0;
            run_sum = 0.0;
        }
        if k < 16 {
            run_len += 1;
            run_sum += diff[i];
        }
    }
    best.map(|(_, s)| s)
}

/// FAST-9 corners with 3×3 non-maximum suppression on the arc score.
pub fn detect_fast(img: &GrayImage, threshold: f64) -> Result<Vec<Keypoint>, FeatureError> {
    require_size(img, 7)?;
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(FeatureError::BadParameter {
            name: "fast_threshold",
            value: threshold,
        });
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut response = vec![f64::NAN; w * h];
    for y in BORDER..img.height() - BORDER {
        for x in BORDER..img.width() - BORDER {
            response[y as usize * w + x as usize] = segment_test(img, x, y, threshold).unwrap_or(0.0);
        }
    }
    Ok(suppress_3x3(w, h, &response, |_| true)
        .into_iter()
        .map(|(x, y, r)| Keypoint {
            x: x as f64,
            y: y as f64,
            response: r,
            scale: UNIT_SCALE,
            detector: Detector::Fast,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Brute force: any of the 16 rotations of a 9-long window all brighter or all darker.
    fn oracle_is_corner(img: &GrayImage, x: u32, y: u32, t: f64) -> bool {
        let c = img.get(x, y);
        let ring: Vec<f64> = CIRCLE_OFFSETS
            .iter()
            .map(|&(dx, dy)| img.get((x as i32 + dx) as u32, (y as i32 + dy) as u32))
            .collect();
        (0..16).any(|s| {
            (0..9).all(|k| ring[(s + k) % 16] > c + t) || (0..9).all(|k| ring[(s + k) % 16] < c - t)
        })
    }

    fn square(size: u32, x0: u32, y0: u32, side: u32) -> GrayImage {
        GrayImage::from_fn(size, size, |x, y| {
            if x >= x0 && x < x0 + side && y >= y0 && y < y0 + side {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    #[test]
    fn uniform_image_has_no_corners() {
        let img = GrayImage::new(20, 20, vec![0.4; 400]).unwrap();
        assert!(detect_fast(&img, 0.1).unwrap().is_empty());
    }

    #[test]
    fn single_dot_is_detected() {
        let img = GrayImage::from_fn(15, 15, |x, y| if (x, y) == (7, 7) { 1.0 } else { 0.0 }).unwrap();
        let oracle: Vec<_> = (3..12)
            .flat_map(|y| (3..12).map(move |x| (x, y)))
            .filter(|&(x, y)| oracle_is_corner(&img, x, y, 0.1))
            .collect();
        assert_eq!(oracle, vec![(7, 7)]);
        let kps = detect_fast(&img, 0.1).unwrap();
        assert_eq!(kps.len(), 1);
        assert_eq!((kps[0].x, kps[0].y), (7.0, 7.0));
        assert!((kps[0].response - 16.0).abs() < 1e-12);
    }

    #[test]
    fn square_corner_is_found_near_the_corner() {
        let img = square(30, 10, 10, 12);
        let kps = detect_fast(&img, 0.1).unwrap();
        for (cx, cy) in [(10.0, 10.0), (21.0, 10.0), (10.0, 21.0), (21.0, 21.0)] {
            let nearest = kps
                .iter()
                .map(|k| ((k.x - cx).powi(2) + (k.y - cy).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(nearest <= 2.0, "corner ({cx},{cy}) nearest {nearest}");
        }
        for k in &kps {
            assert!(oracle_is_corner(&img, k.x as u32, k.y as u32, 0.1));
        }
    }

    #[test]
    fn segment_test_agrees_with_oracle_on_random_images() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let img = GrayImage::from_fn(16, 16, |_, _| (rng.gen_range(0..4) as f64) / 3.0).unwrap();
            for y in 3..13 {
                for x in 3..13 {
                    assert_eq!(
                        segment_test(&img, x, y, 0.2).is_some(),
                        oracle_is_corner(&img, x, y, 0.2),
                        "({x},{y})"
                    );
                }
            }
        }
    }

    #[test]
    fn offset_below_threshold_does_not_change_detections() {
        let img = square(30, 10, 10, 12);
        let scaled = GrayImage::from_fn(30, 30, |x, y| img.get(x, y) * 0.8).unwrap();
        let shifted = GrayImage::from_fn(30, 30, |x, y| scaled.get(x, y) + 0.05).unwrap();
        let pos = |v: Vec<Keypoint>| v.into_iter().map(|k| (k.x, k.y)).collect::<Vec<_>>();
        assert_eq!(
            pos(detect_fast(&scaled, 0.1).unwrap()),
            pos(detect_fast(&shifted, 0.1).unwrap())
        );
    }

    #[test]
    fn too_small_image() {
        let img = GrayImage::new(6, 9, vec![0.0; 54]).unwrap();
        assert!(matches!(
            detect_fast(&img, 0.1),
            Err(FeatureError::ImageTooSmall { .. })
        ));
    }
}
