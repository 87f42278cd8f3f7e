//! Exhaustive shift-invariant kernel.
//!
//! On a log-frequency axis a transposed note is a translated column, so a
//! candidate frame is compared against the target at every shift in
//! `-max_shift..=max_shift` and scored by its best alignment. Bins shifted in
//! from beyond the axis read as zero.

use crate::error::Result;
use crate::kam::{pool_without_target, sq_dist, take_smallest, Neighbor, NeighborSet};
use crate::timefreq::MagSpectrogram;

pub use crate::kam::median_estimate as median_estimate_shifted;

/// `out[f] = col[f + shift]`, zero outside the axis.
pub fn shift_frame(col: &[f64], shift: i32) -> Vec<f64> {
    let len = col.len() as i64;
    (0..len)
        .map(|f| {
            let src = f + shift as i64;
            if (0..len).contains(&src) {
                col[src as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// Running sums of squares, `prefix[i] = sum(col[..i]^2)`.
#[derive(Debug, Clone)]
pub(crate) struct SquarePrefix(Vec<f64>);

impl SquarePrefix {
    pub(crate) fn new(col: &[f64]) -> Self {
        let mut acc = 0.0;
        let mut prefix = Vec::with_capacity(col.len() + 1);
        prefix.push(0.0);
        for v in col {
            acc += v * v;
            prefix.push(acc);
        }
        Self(prefix)
    }

    fn range(&self, lo: usize, hi: usize) -> f64 {
        self.0[hi] - self.0[lo]
    }
}

/// Squared distance between `target` and `shift_frame(cand, shift)` without
/// materializing the shifted column. With `shift == 0` this is exactly
/// `sq_dist(target, cand)`.
pub(crate) fn shifted_distance(
    target: &[f64],
    cand: &[f64],
    shift: i32,
    target_sq: &SquarePrefix,
) -> f64 {
    let len = target.len();
    let s = shift.unsigned_abs() as usize;
    if s >= len {
        return target_sq.range(0, len);
    }
    if shift >= 0 {
        // target[f] pairs with cand[f + s] for f < len - s; the tail reads zeros.
        sq_dist(&target[..len - s], &cand[s..]) + target_sq.range(len - s, len)
    } else {
        sq_dist(&target[s..], &cand[..len - s]) + target_sq.range(0, s)
    }
}

/// Best shift of one candidate: smallest distance, ties to the smaller shift.
pub(crate) fn best_alignment(
    target: &[f64],
    cand: &[f64],
    max_shift: usize,
    target_sq: &SquarePrefix,
) -> (i32, f64) {
    let max = max_shift as i32;
    let mut best = (0, f64::INFINITY);
    for shift in -max..=max {
        let d = shifted_distance(target, cand, shift, target_sq);
        if d < best.1 {
            best = (shift, d);
        }
    }
    best
}

/// K nearest frames over all shifts in `-max_shift..=max_shift`, keeping one
/// (the best) shift per candidate frame.
pub fn knn_shift_exhaustive(
    mag: &MagSpectrogram,
    target: usize,
    candidates: &[usize],
    k: usize,
    max_shift: usize,
) -> Result<NeighborSet> {
    let pool = pool_without_target(target, candidates, k)?;
    let query = mag.frame(target);
    let prefix = SquarePrefix::new(query);
    let scored = pool
        .into_iter()
        .map(|frame| {
            let (shift, distance) = best_alignment(query, mag.frame(frame), max_shift, &prefix);
            Neighbor {
                frame,
                shift,
                distance,
            }
        })
        .collect();
    Ok(NeighborSet {
        target,
        neighbors: take_smallest(scored, k),
    })
}
