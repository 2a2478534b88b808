use std::fmt;
use std::str::FromStr;

use super::{AffineTransform2D, Point, RegistrationError};

/// Determinants outside this band are reported as ill-conditioned.
pub const CONDITIONING_DET_RANGE: (f64, f64) = (0.5, 2.0);

/// Translations beyond this many frame diagonals are reported as ill-conditioned.
pub const CONDITIONING_DIAGONALS: f64 = 10.0;

/// Which frame anchors the global coordinate system.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq)]
pub enum ReferencePolicy {
    #[default]
    Middle,
    First,
    Index(usize),
}

impl ReferencePolicy {
    pub fn resolve(&self, frame_count: usize) -> Result<usize, RegistrationError> {
        let idx = match *self {
            ReferencePolicy::Middle => frame_count / 2,
            ReferencePolicy::First => 0,
            ReferencePolicy::Index(i) => i,
        };
        if idx >= frame_count {
            return Err(RegistrationError::BadReference {
                index: idx,
                frames: frame_count,
            });
        }
        Ok(idx)
    }
}

impl fmt::Display for ReferencePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ReferencePolicy::Middle => f.write_str("middle"),
            ReferencePolicy::First => f.write_str("first"),
            ReferencePolicy::Index(i) => write!(f, "{i}"),
        }
    }
}

impl FromStr for ReferencePolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "middle" => Ok(ReferencePolicy::Middle),
            "first" => Ok(ReferencePolicy::First),
            other => other
                .parse()
                .map(ReferencePolicy::Index)
                .map_err(|_| format!("bad reference `{other}` (expected middle|first|N)")),
        }
    }
}

/// Per-frame maps from frame coordinates into reference-frame coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CameraPath {
    pub reference_index: usize,
    pub to_global: Vec<AffineTransform2D>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConditioningWarning {
    pub frame: usize,
    pub det: f64,
    pub tx: f64,
    pub ty: f64,
}

impl fmt::Display for ConditioningWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "frame {}: global transform is poorly conditioned (det {:.4}, translation ({:.1}, {:.1}))",
            self.frame, self.det, self.tx, self.ty
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainedPath {
    pub path: CameraPath,
    pub warnings: Vec<ConditioningWarning>,
}

/// Chains consecutive-frame transforms toward `reference_index`.
///
/// `pairwise[i]` maps frame `i + 1` coordinates into frame `i` coordinates.
pub fn chain_to_reference(
    pairwise: &[AffineTransform2D],
    reference_index: usize,
    frame_size: (u32, u32),
) -> Result<ChainedPath, RegistrationError> {
    let n = pairwise.len() + 1;
    if reference_index >= n {
        return Err(RegistrationError::BadReference {
            index: reference_index,
            frames: n,
        });
    }
    let mut to_global = vec![AffineTransform2D::IDENTITY; n];
    for k in reference_index + 1..n {
        to_global[k] = to_global[k - 1].compose(&pairwise[k - 1]);
    }
    for k in (0..reference_index).rev() {
        to_global[k] = to_global[k + 1].compose(&pairwise[k].invert()?);
    }
    let diagonal = (frame_size.0 as f64).hypot(frame_size.1 as f64);
    let mut warnings = Vec::new();
    for (frame, t) in to_global.iter().enumerate() {
        let det = t.det();
        if !t.is_invertible() {
            return Err(RegistrationError::Singular { det });
        }
        let (lo, hi) = CONDITIONING_DET_RANGE;
        let far = CONDITIONING_DIAGONALS * diagonal;
        if det.abs() < lo || det.abs() > hi || t.tx.abs() > far || t.ty.abs() > far {
            let w = ConditioningWarning {
                frame,
                det,
                tx: t.tx,
                ty: t.ty,
            };
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    Ok(ChainedPath {
        path: CameraPath {
            reference_index,
            to_global,
        },
        warnings,
    })
}

/// Position of each frame's centre relative to the reference frame's centre.
pub fn camera_displacement(path: &CameraPath, frame_size: (u32, u32)) -> Vec<Point> {
    let c = Point::new(
        (frame_size.0 as f64 - 1.0) / 2.0,
        (frame_size.1 as f64 - 1.0) / 2.0,
    );
    let reference = path.to_global[path.reference_index].apply(c);
    path.to_global
        .iter()
        .map(|t| {
            let p = t.apply(c);
            Point::new(p.x - reference.x, p.y - reference.y)
        })
        .collect()
}

impl CameraPath {
    pub fn len(&self) -> usize {
        self.to_global.len()
    }

    pub fn is_empty(&self) -> bool {
        self.to_global.is_empty()
    }

    /// Transforms mapping frame `i + 1` into frame `i`, recovered from the global maps.
    pub fn relative_transforms(&self) -> Result<Vec<AffineTransform2D>, RegistrationError> {
        self.to_global
            .windows(2)
            .map(|w| Ok(w[0].invert()?.compose(&w[1])))
            .collect()
    }

    /// CSV with header `frame,tx_px,ty_px,a11,a12,a21,a22`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame,tx_px,ty_px,a11,a12,a21,a22\n");
        for (i, t) in self.to_global.iter().enumerate() {
            s.push_str(&format!(
                "{i},{},{},{},{},{},{}\n",
                t.tx, t.ty, t.a11, t.a12, t.a21, t.a22
            ));
        }
        s
    }

    /// Parses [`CameraPath::to_csv`] output; the reference is the first identity row.
    pub fn from_csv(text: &str) -> Result<CameraPath, RegistrationError> {
        let bad = |line: usize, why: &str| RegistrationError::Parse {
            line,
            reason: why.to_string(),
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == "frame,tx_px,ty_px,a11,a12,a21,a22" => {}
            _ => return Err(bad(1, "missing camera path header")),
        }
        let mut to_global = Vec::new();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 7 {
                return Err(bad(i + 1, "expected 7 fields"));
            }
            let v: Result<Vec<f64>, _> = fields[1..].iter().map(|f| f.trim().parse::<f64>()).collect();
            let v = v.map_err(|e| bad(i + 1, &e.to_string()))?;
            to_global.push(AffineTransform2D {
                tx: v[0],
                ty: v[1],
                a11: v[2],
                a12: v[3],
                a21: v[4],
                a22: v[5],
            });
        }
        let reference_index = to_global
            .iter()
            .position(|t| *t == AffineTransform2D::IDENTITY)
            .ok_or_else(|| bad(0, "no identity row marks the reference frame"))?;
        Ok(CameraPath {
            reference_index,
            to_global,
        })
    }
}
