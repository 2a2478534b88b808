use super::{require_size, suppress_3x3, Detector, FeatureError, Keypoint, UNIT_SCALE};
use crate::raster::GrayImage;

const BORDER: usize = 3;

/// Normalized 5-tap Gaussian, sigma = 1.
fn gaussian5() -> [f64; 5] {
    let mut k = [0.0; 5];
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - 2.0;
        *v = (-d * d / 2.0).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Harris response `det(M) - k trace(M)^2` on the pixels at least 3 px from
/// the border; other cells are `NaN`.
pub(crate) fn harris_response(img: &GrayImage, k: f64) -> Vec<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let v = img.values();
    let mut ixx = vec![0.0; w * h];
    let mut iyy = vec![0.0; w * h];
    let mut ixy = vec![0.0; w * h];
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let gx = (v[i + 1] - v[i - 1]) / 2.0;
            let gy = (v[i + w] - v[i - w]) / 2.0;
            ixx[i] = gx * gx;
            iyy[i] = gy * gy;
            ixy[i] = gx * gy;
        }
    }
    let g = gaussian5();
    // Separable smoothing restricted to where all taps have gradients.
    let smooth = |src: &[f64]| {
        let mut tmp = vec![0.0; w * h];
        for y in 1..h - 1 {
            for x in BORDER..w - BORDER {
                tmp[y * w + x] = (0..5).map(|t| g[t] * src[y * w + x + t - 2]).sum();
            }
        }
        let mut out = vec![0.0; w * h];
        for y in BORDER..h - BORDER {
            for x in BORDER..w - BORDER {
                out[y * w + x] = (0..5).map(|t| g[t] * tmp[(y + t - 2) * w + x]).sum();
            }
        }
        out
    };
    let (sxx, syy, sxy) = (smooth(&ixx), smooth(&iyy), smooth(&ixy));
    let mut response = vec![f64::NAN; w * h];
    for y in BORDER..h - BORDER {
        for x in BORDER..w - BORDER {
            let i = y * w + x;
            let det = sxx[i] * syy[i] - sxy[i] * sxy[i];
            let tr = sxx[i] + syy[i];
            response[i] = det - k * tr * tr;
        }
    }
    response
}

/// Harris corners: 3×3 local maxima of the response with `R >= rel_threshold * max(R)`.
pub fn detect_harris(
    img: &GrayImage,
    k: f64,
    rel_threshold: f64,
) -> Result<Vec<Keypoint>, FeatureError> {
    require_size(img, 7)?;
    if !(0.02..=0.15).contains(&k) {
        return Err(FeatureError::BadParameter {
            name: "harris_k",
            value: k,
        });
    }
    if !(rel_threshold > 0.0 && rel_threshold < 1.0) {
        return Err(FeatureError::BadParameter {
            name: "harris_rel_threshold",
            value: rel_threshold,
        });
    }
    let (w, h) = (img.width() as usize, img.height() as usize);
    let response = harris_response(img, k);
    let max = response
        .iter()
        .filter(|r| !r.is_nan())
        .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    if !(max > 0.0) {
        return Ok(Vec::new());
    }
    let floor = rel_threshold * max;
    Ok(suppress_3x3(w, h, &response, |r| r >= floor)
        .into_iter()
        .map(|(x, y, r)| Keypoint {
            x: x as f64,
            y: y as f64,
            response: r,
            scale: UNIT_SCALE,
            detector: Detector::Harris,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Structure tensor evaluated directly at one pixel from its 5×5 neighbourhood.
    fn direct_response(img: &GrayImage, x: i64, y: i64, k: f64) -> f64 {
        let at = |xx: i64, yy: i64| img.get(xx as u32, yy as u32);
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        let mut norm = 0.0;
        for dy in -2i64..=2 {
            for dx in -2i64..=2 {
                let wgt = (-((dx * dx + dy * dy) as f64) / 2.0).exp();
                norm += wgt;
                let (px, py) = (x + dx, y + dy);
                let gx = (at(px + 1, py) - at(px - 1, py)) / 2.0;
                let gy = (at(px, py + 1) - at(px, py - 1)) / 2.0;
                a += wgt * gx * gx;
                b += wgt * gy * gy;
                c += wgt * gx * gy;
            }
        }
        let (a, b, c) = (a / norm, b / norm, c / norm);
        a * b - c * c - k * (a + b).powi(2)
    }

    fn checker(size: u32) -> GrayImage {
        let half = size / 2;
        GrayImage::from_fn(size, size, |x, y| if (x < half) ^ (y < half) { 1.0 } else { 0.0 }).unwrap()
    }

    #[test]
    fn uniform_image_has_no_corners() {
        let img = GrayImage::new(16, 16, vec![0.7; 256]).unwrap();
        assert!(detect_harris(&img, 0.04, 0.01).unwrap().is_empty());
    }

    #[test]
    fn dense_response_matches_direct_evaluation() {
        let img = checker(20);
        let resp = harris_response(&img, 0.04);
        for y in 3..17 {
            for x in 3..17 {
                let d = direct_response(&img, x, y, 0.04);
                assert!((resp[(y * 20 + x) as usize] - d).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn checkerboard_crossing_is_the_strongest_corner() {
        let img = checker(20);
        // Oracle: argmax of the directly evaluated response.
        let mut best = (0, 0, f64::NEG_INFINITY);
        for y in 3..17 {
            for x in 3..17 {
                let r = direct_response(&img, x, y, 0.04);
                if r > best.2 {
                    best = (x, y, r);
                }
            }
        }
        // The crossing lies between pixels 9 and 10 on both axes.
        assert!((best.0 - 9).abs() <= 1 && (best.1 - 9).abs() <= 1);
        let kps = detect_harris(&img, 0.04, 0.01).unwrap();
        let top = kps
            .iter()
            .max_by(|a, b| a.response.total_cmp(&b.response))
            .unwrap();
        assert!((top.x - 9.5).abs() <= 1.0 && (top.y - 9.5).abs() <= 1.0);
        assert!((top.response - best.2).abs() < 1e-12);
    }

    #[test]
    fn straight_edge_has_no_interior_keypoints() {
        let img = GrayImage::from_fn(24, 24, |x, _| if x < 12 { 0.0 } else { 1.0 }).unwrap();
        for y in 5..19 {
            for x in 9..15 {
                assert!(direct_response(&img, x, y, 0.04) <= 0.0);
            }
        }
        assert!(detect_harris(&img, 0.04, 0.01).unwrap().is_empty());
    }

    #[test]
    fn argmax_positions_invariant_under_luminance_scaling() {
        let img = checker(20);
        let dim = GrayImage::from_fn(20, 20, |x, y| img.get(x, y) * 0.3).unwrap();
        let pos = |v: Vec<Keypoint>| v.into_iter().map(|k| (k.x, k.y)).collect::<Vec<_>>();
        assert_eq!(
            pos(detect_harris(&img, 0.04, 0.01).unwrap()),
            pos(detect_harris(&dim, 0.04, 0.01).unwrap())
        );
    }

    #[test]
    fn rejects_bad_k() {
        let img = checker(20);
        assert!(detect_harris(&img, 0.5, 0.01).is_err());
    }
}
