use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Point, RegistrationError};

/// Smallest |det| accepted as invertible.
pub const MIN_ABS_DET: f64 = 1e-6;

/// RANSAC never accepts a consensus smaller than this.
pub const MIN_INLIERS: usize = 6;

pub const DEFAULT_RANSAC_ITERS: usize = 500;
pub const DEFAULT_RANSAC_TOL: f64 = 2.0;

/// Planar affine map `(x, y) -> (a11 x + a12 y + tx, a21 x + a22 y + ty)`.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct AffineTransform2D {
    pub a11: f64,
    pub a12: f64,
    pub a21: f64,
    pub a22: f64,
    pub tx: f64,
    pub ty: f64,
}

impl Default for AffineTransform2D {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl AffineTransform2D {
    pub const IDENTITY: Self = Self {
        a11: 1.0,
        a12: 0.0,
        a21: 0.0,
        a22: 1.0,
        tx: 0.0,
        ty: 0.0,
    };

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            tx,
            ty,
            ..Self::IDENTITY
        }
    }

    pub fn det(&self) -> f64 {
        self.a11 * self.a22 - self.a12 * self.a21
    }

    pub fn is_invertible(&self) -> bool {
        self.det().abs() > MIN_ABS_DET
    }

    pub fn apply(&self, p: Point) -> Point {
        Point::new(
            self.a11 * p.x + self.a12 * p.y + self.tx,
            self.a21 * p.x + self.a22 * p.y + self.ty,
        )
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &AffineTransform2D) -> AffineTransform2D {
        AffineTransform2D {
            a11: self.a11 * other.a11 + self.a12 * other.a21,
            a12: self.a11 * other.a12 + self.a12 * other.a22,
            a21: self.a21 * other.a11 + self.a22 * other.a21,
            a22: self.a21 * other.a12 + self.a22 * other.a22,
            tx: self.a11 * other.tx + self.a12 * other.ty + self.tx,
            ty: self.a21 * other.tx + self.a22 * other.ty + self.ty,
        }
    }

    pub fn invert(&self) -> Result<AffineTransform2D, RegistrationError> {
        let det = self.det();
        if !(det.abs() > MIN_ABS_DET) {
            return Err(RegistrationError::Singular { det });
        }
        let a11 = self.a22 / det;
        let a12 = -self.a12 / det;
        let a21 = -self.a21 / det;
        let a22 = self.a11 / det;
        Ok(AffineTransform2D {
            a11,
            a12,
            a21,
            a22,
            tx: -(a11 * self.tx + a12 * self.ty),
            ty: -(a21 * self.tx + a22 * self.ty),
        })
    }

    /// Largest absolute coefficient difference.
    pub fn max_abs_diff(&self, other: &AffineTransform2D) -> f64 {
        [
            self.a11 - other.a11,
            self.a12 - other.a12,
            self.a21 - other.a21,
            self.a22 - other.a22,
            self.tx - other.tx,
            self.ty - other.ty,
        ]
        .iter()
        .fold(0.0, |m, d| m.max(d.abs()))
    }
}

/// Free function forms of the transform algebra.
pub fn compose(t1: &AffineTransform2D, t2: &AffineTransform2D) -> AffineTransform2D {
    t1.compose(t2)
}

pub fn invert(t: &AffineTransform2D) -> Result<AffineTransform2D, RegistrationError> {
    t.invert()
}

pub fn apply(t: &AffineTransform2D, p: Point) -> Point {
    t.apply(p)
}

/// Similarity that moves the centroid to the origin and the mean radius to √2.
fn normalizer(points: impl Iterator<Item = Point> + Clone) -> Option<(f64, Point)> {
    let n = points.clone().count() as f64;
    let (sx, sy) = points.clone().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
    let c = Point::new(sx / n, sy / n);
    let mean_r = points.map(|p| p.distance(c)).sum::<f64>() / n;
    if !(mean_r > 0.0) || !mean_r.is_finite() {
        return None;
    }
    Some((std::f64::consts::SQRT_2 / mean_r, c))
}

/// Least-squares affine fit of `dst ≈ T(src)` with centroid/scale normalization.
pub fn estimate_affine_lsq(pairs: &[(Point, Point)]) -> Result<AffineTransform2D, RegistrationError> {
    if pairs.len() < 3 {
        return Err(RegistrationError::Degenerate);
    }
    let (s_scale, s_c) = normalizer(pairs.iter().map(|p| p.0)).ok_or(RegistrationError::Degenerate)?;
    let (d_scale, d_c) = normalizer(pairs.iter().map(|p| p.1)).ok_or(RegistrationError::Degenerate)?;

    // In normalized coordinates both centroids are zero, so the translation
    // decouples and the linear part is (Σ d sᵀ)(Σ s sᵀ)⁻¹.
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    let (mut m11, mut m12, mut m21, mut m22) = (0.0, 0.0, 0.0, 0.0);
    for (s, d) in pairs {
        let (ux, uy) = ((s.x - s_c.x) * s_scale, (s.y - s_c.y) * s_scale);
        let (vx, vy) = ((d.x - d_c.x) * d_scale, (d.y - d_c.y) * d_scale);
        sxx += ux * ux;
        sxy += ux * uy;
        syy += uy * uy;
        m11 += vx * ux;
        m12 += vx * uy;
        m21 += vy * ux;
        m22 += vy * uy;
    }
    let n = pairs.len() as f64;
    let det_s = (sxx * syy - sxy * sxy) / (n * n);
    // Mean radius √2 bounds the scatter, so collinear sets fall near zero.
    if !(det_s > 1e-10) {
        return Err(RegistrationError::Degenerate);
    }
    let det_s = sxx * syy - sxy * sxy;
    let (i11, i12, i22) = (syy / det_s, -sxy / det_s, sxx / det_s);
    let b11 = m11 * i11 + m12 * i12;
    let b12 = m11 * i12 + m12 * i22;
    let b21 = m21 * i11 + m22 * i12;
    let b22 = m21 * i12 + m22 * i22;

    // Denormalize: T = D⁻¹ · B · S with S(p) = s_scale (p - s_c), D(q) = d_scale (q - d_c).
    let k = s_scale / d_scale;
    let (a11, a12, a21, a22) = (b11 * k, b12 * k, b21 * k, b22 * k);
    let t = AffineTransform2D {
        a11,
        a12,
        a21,
        a22,
        tx: d_c.x - (a11 * s_c.x + a12 * s_c.y),
        ty: d_c.y - (a21 * s_c.x + a22 * s_c.y),
    };
    if !t.is_invertible() {
        return Err(RegistrationError::Degenerate);
    }
    Ok(t)
}

/// Reprojection distance of one correspondence.
pub fn reprojection_error(t: &AffineTransform2D, pair: &(Point, Point)) -> f64 {
    t.apply(pair.0).distance(pair.1)
}

fn inliers_of(t: &AffineTransform2D, pairs: &[(Point, Point)], tol: f64) -> Vec<usize> {
    pairs
        .iter()
        .enumerate()
        .filter(|(_, p)| reprojection_error(t, p) <= tol)
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacFit {
    pub transform: AffineTransform2D,
    pub inliers: Vec<usize>,
}

/// Seeded RANSAC over minimal 3-point samples, refined by least squares on
/// the best consensus set.
pub fn estimate_affine_ransac(
    pairs: &[(Point, Point)],
    iters: usize,
    tol: f64,
    seed: u64,
) -> Result<RansacFit, RegistrationError> {
    if pairs.len() < 3 {
        return Err(RegistrationError::Degenerate);
    }
    if pairs.len() < MIN_INLIERS {
        return Err(RegistrationError::NoConsensus {
            best: 0,
            required: MIN_INLIERS,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = pairs.len();
    let mut best: Vec<usize> = Vec::new();
    for _ in 0..iters {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n - 1);
        if b >= a {
            b += 1;
        }
        let mut c = rng.gen_range(0..n - 2);
        for lo in [a.min(b), a.max(b)] {
            if c >= lo {
                c += 1;
            }
        }
        let sample = [pairs[a], pairs[b], pairs[c]];
        let Ok(model) = estimate_affine_lsq(&sample) else {
            continue;
        };
        let inliers = inliers_of(&model, pairs, tol);
        if inliers.len() > best.len() {
            best = inliers;
            if best.len() == n {
                break;
            }
        }
    }
    if best.len() < MIN_INLIERS {
        return Err(RegistrationError::NoConsensus {
            best: best.len(),
            required: MIN_INLIERS,
        });
    }
    let subset: Vec<_> = best.iter().map(|&i| pairs[i]).collect();
    let refined = estimate_affine_lsq(&subset)?;
    let refined_inliers = inliers_of(&refined, pairs, tol);
    if refined_inliers.len() >= MIN_INLIERS {
        return Ok(RansacFit {
            transform: refined,
            inliers: refined_inliers,
        });
    }
    Err(RegistrationError::NoConsensus {
        best: refined_inliers.len(),
        required: MIN_INLIERS,
    })
}
