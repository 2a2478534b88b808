use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Keypoint;
use crate::raster::{integral, GrayImage, IntegralImage};

/// Seed of the comparison-point pattern. Changing it invalidates stored descriptors.
pub const DESCRIPTOR_SEED: u64 = 0x5EED;

/// Half-width of the 31×31 sampling patch.
pub const PATCH_RADIUS: i32 = 15;

const PAIRS: usize = 256;
const SMOOTH_RADIUS: i64 = 2;

/// 256-bit binary descriptor of one keypoint.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Descriptor {
    pub bits: [u64; 4],
    pub keypoint_index: usize,
}

impl Descriptor {
    pub fn hamming(&self, other: &Descriptor) -> u32 {
        self.bits
            .iter()
            .zip(&other.bits)
            .map(|(a, b)| (a ^ b).count_ones())
            .sum()
    }

    pub fn bit(&self, i: usize) -> bool {
        self.bits[i / 64] >> (i % 64) & 1 == 1
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DescribeOutput {
    pub descriptors: Vec<Descriptor>,
    /// Indices of keypoints whose patch leaves the image.
    pub dropped: Vec<usize>,
}

type Pair = ((i32, i32), (i32, i32));

/// The 256 comparison pairs, drawn uniformly from the patch with distinct endpoints.
pub fn sampling_pattern() -> &'static [Pair; PAIRS] {
    static PATTERN: OnceLock<[Pair; PAIRS]> = OnceLock::new();
    PATTERN.get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(DESCRIPTOR_SEED);
        let mut draw = || {
            (
                rng.gen_range(-PATCH_RADIUS..=PATCH_RADIUS),
                rng.gen_range(-PATCH_RADIUS..=PATCH_RADIUS),
            )
        };
        let mut pairs = [((0, 0), (0, 0)); PAIRS];
        for pair in pairs.iter_mut() {
            let p = draw();
            let mut q = draw();
            while q == p {
                q = draw();
            }
            *pair = (p, q);
        }
        pairs
    })
}

/// 5×5 box mean, clipped at the image edge.
#[inline]
fn smoothed(ii: &IntegralImage, x: i64, y: i64) -> f64 {
    let r = SMOOTH_RADIUS;
    let (w, h) = ii.dimensions();
    let x0 = (x - r).max(0);
    let y0 = (y - r).max(0);
    let x1 = (x + r + 1).min(w as i64);
    let y1 = (y + r + 1).min(h as i64);
    let area = ((x1 - x0) * (y1 - y0)) as f64;
    ii.rect_sum_clipped(x0, y0, x1, y1) / area
}

/// BRIEF-style descriptors on the box-smoothed image. Keypoints whose 31×31
/// patch does not fit inside the image are listed in `dropped`.
pub fn describe(img: &GrayImage, kps: &[Keypoint]) -> DescribeOutput {
    let ii = integral(img);
    let pattern = sampling_pattern();
    let (w, h) = (img.width() as i64, img.height() as i64);
    let r = PATCH_RADIUS as i64;
    let mut out = DescribeOutput::default();
    for (index, kp) in kps.iter().enumerate() {
        let cx = kp.x.round() as i64;
        let cy = kp.y.round() as i64;
        if cx - r < 0 || cy - r < 0 || cx + r >= w || cy + r >= h {
            out.dropped.push(index);
            continue;
        }
        let mut bits = [0u64; 4];
        for (i, &((px, py), (qx, qy))) in pattern.iter().enumerate() {
            let a = smoothed(&ii, cx + px as i64, cy + py as i64);
            let b = smoothed(&ii, cx + qx as i64, cy + qy as i64);
            if a < b {
                bits[i / 64] |= 1 << (i % 64);
            }
        }
        out.descriptors.push(Descriptor {
            bits,
            keypoint_index: index,
        });
    }
    out
}
