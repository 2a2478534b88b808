use crate::features::Descriptor;

pub const DEFAULT_RATIO: f64 = 0.8;

/// Hamming distance accepted when the candidate set has no second neighbour.
pub const SINGLETON_MAX_DISTANCE: u32 = 64;

/// Correspondence between keypoint `index_a` of one frame and `index_b` of the next.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct Match {
    pub index_a: usize,
    pub index_b: usize,
    pub distance: u32,
}

/// Ratio-test nearest-neighbour matching, made one-to-one on the `b` side.
///
/// Indices in the result are the descriptors' `keypoint_index` values, ordered by `index_a`.
pub fn match_descriptors(a: &[Descriptor], b: &[Descriptor], ratio: f64) -> Vec<Match> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    // Best candidate per b position: (distance, a position).
    let mut claimed: Vec<Option<(u32, usize)>> = vec![None; b.len()];
    for (ia, da) in a.iter().enumerate() {
        let mut d1 = u32::MAX;
        let mut d2 = u32::MAX;
        let mut best = 0;
        for (ib, db) in b.iter().enumerate() {
            let d = da.hamming(db);
            if d < d1 {
                d2 = d1;
                d1 = d;
                best = ib;
            } else if d < d2 {
                d2 = d;
            }
        }
        let accepted = if b.len() == 1 {
            d1 <= SINGLETON_MAX_DISTANCE
        } else {
            (d1 as f64) < ratio * d2 as f64
        };
        if !accepted {
            continue;
        }
        // Iteration runs in ascending `ia`, so strict `<` keeps the smaller index on ties.
        match claimed[best] {
            Some((d, _)) if d <= d1 => {}
            _ => claimed[best] = Some((d1, ia)),
        }
    }
    let mut out: Vec<Match> = claimed
        .iter()
        .enumerate()
        .filter_map(|(ib, c)| {
            c.map(|(distance, ia)| Match {
                index_a: a[ia].keypoint_index,
                index_b: b[ib].keypoint_index,
                distance,
            })
        })
        .collect();
    out.sort_by_key(|m| (m.index_a, m.index_b));
    out
}
