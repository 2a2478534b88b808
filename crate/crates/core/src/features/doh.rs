use super::{require_size, Detector, FeatureError, Keypoint, UNIT_SCALE};
use crate::raster::{integral, GrayImage, IntegralImage};

/// Box-filter side lengths of the single octave.
pub const DOH_FILTER_SIZES: [u32; 4] = [9, 15, 21, 27];

/// Weight of the mixed term compensating the box approximation.
const DXY_WEIGHT: f64 = 0.9;

/// Box sum over `rows × cols` starting at `(row, col)`; may touch the border but never cross it.
#[inline]
fn box_sum(ii: &IntegralImage, row: i64, col: i64, rows: i64, cols: i64) -> f64 {
    ii.rect_sum_clipped(col, row, col + cols, row + rows)
}

/// Area-normalized determinant of the box-filter Hessian of side `size` at `(x, y)`.
///
/// Callers keep `(x, y)` at least `(size - 1) / 2` pixels from every edge.
#[inline]
fn response(ii: &IntegralImage, x: i64, y: i64, size: u32) -> f64 {
    let l = (size / 3) as i64;
    let b = ((size - 1) / 2) as i64;
    let w = size as i64;
    let inv_area = 1.0 / (w * w) as f64;
    let dxx = box_sum(ii, y - l + 1, x - b, 2 * l - 1, w)
        - 3.0 * box_sum(ii, y - l + 1, x - l / 2, 2 * l - 1, l);
    let dyy = box_sum(ii, y - b, x - l + 1, w, 2 * l - 1)
        - 3.0 * box_sum(ii, y - l / 2, x - l + 1, l, 2 * l - 1);
    let dxy = box_sum(ii, y - l, x + 1, l, l) + box_sum(ii, y + 1, x - l, l, l)
        - box_sum(ii, y - l, x - l, l, l)
        - box_sum(ii, y + 1, x + 1, l, l);
    let (dxx, dyy, dxy) = (dxx * inv_area, dyy * inv_area, dxy * inv_area);
    dxx * dyy - (DXY_WEIGHT * dxy).powi(2)
}

/// DoH response at one pixel and filter size.
pub fn doh_response_at(img: &GrayImage, x: u32, y: u32, size: u32) -> f64 {
    response(&integral(img), x as i64, y as i64, size)
}

fn margin() -> u32 {
    (DOH_FILTER_SIZES[DOH_FILTER_SIZES.len() - 1] - 1) / 2
}

/// Determinant-of-Hessian blobs over four box-filter sizes with 3×3×3
/// non-maximum suppression; boundary sizes compare against their single
/// neighbouring layer.
pub fn detect_doh(img: &GrayImage, threshold: f64) -> Result<Vec<Keypoint>, FeatureError> {
    let largest = DOH_FILTER_SIZES[DOH_FILTER_SIZES.len() - 1];
    require_size(img, largest)?;
    if !(threshold >= 0.0 && threshold.is_finite()) {
        return Err(FeatureError::BadParameter {
            name: "doh_threshold",
            value: threshold,
        });
    }
    let ii = integral(img);
    let (w, h) = (img.width() as usize, img.height() as usize);
    let m = margin() as usize;
    let layers: Vec<Vec<f64>> = DOH_FILTER_SIZES
        .iter()
        .map(|&size| {
            let row = |y: usize| {
                let mut out = vec![f64::NAN; w];
                if y >= m && y < h - m {
                    for (x, o) in out.iter_mut().enumerate().take(w - m).skip(m) {
                        *o = response(&ii, x as i64, y as i64, size);
                    }
                }
                out
            };
            #[cfg(feature = "parallel")]
            let rows: Vec<Vec<f64>> = {
                use rayon::prelude::*;
                (0..h).into_par_iter().map(row).collect()
            };
            #[cfg(not(feature = "parallel"))]
            let rows: Vec<Vec<f64>> = (0..h).map(row).collect();
            rows.concat()
        })
        .collect();

    let mut out = Vec::new();
    for y in m..h - m {
        for x in m..w - m {
            for (s, layer) in layers.iter().enumerate() {
                let r = layer[y * w + x];
                if !(r > threshold) || r <= 0.0 {
                    continue;
                }
                if is_scale_space_max(&layers, w, h, x, y, s, r) {
                    out.push(Keypoint {
                        x: x as f64,
                        y: y as f64,
                        response: r,
                        scale: UNIT_SCALE * DOH_FILTER_SIZES[s] as f64 / 9.0,
                        detector: Detector::Doh,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Strict-before / non-strict-after comparison over the 26-neighbourhood,
/// ordered by (scale, row, column).
fn is_scale_space_max(
    layers: &[Vec<f64>],
    w: usize,
    h: usize,
    x: usize,
    y: usize,
    s: usize,
    r: f64,
) -> bool {
    for ds in -1i64..=1 {
        let ns = s as i64 + ds;
        if ns < 0 || ns >= layers.len() as i64 {
            continue;
        }
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                if ds == 0 && dy == 0 && dx == 0 {
                    continue;
                }
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || ny < 0 || nx >= w as i64 || ny >= h as i64 {
                    continue;
                }
                let n = layers[ns as usize][ny as usize * w + nx as usize];
                if n.is_nan() {
                    continue;
                }
                let earlier = (ds, dy, dx) < (0, 0, 0);
                if n > r || (earlier && n == r) {
                    return false;
                }
            }
        }
    }
    true
}
