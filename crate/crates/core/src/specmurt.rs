//! Accelerated shift-invariant search.
//!
//! The specmurt of a log-frequency magnitude column is the modulus of its
//! DFT. Translating the column only changes the phase of that DFT, so frames
//! holding the same pattern at different pitches land close together and a
//! single Euclidean search over specmurt vectors replaces the search over all
//! shifts. Since the modulus discards where the pattern sits, the shift for a
//! selected frame is then recovered by fast deconvolution of the two columns,
//! and the pruned variant re-ranks an enlarged pool by true aligned distance.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kam::{pool_without_target, sq_dist, take_smallest, Neighbor, NeighborSet};
use crate::shiftkam::{shifted_distance, SquarePrefix};
use crate::timefreq::MagSpectrogram;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecmurtFrame {
    /// `|DFT(col)|` at indices `dropped_head..=len/2`.
    pub coeffs: Vec<f64>,
    pub dropped_head: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftEstimate {
    /// Shift that aligns the candidate to the target under `shift_frame`.
    pub delta: i32,
    pub peak_value: f64,
    /// Peak over the second largest magnitude of the deconvolution.
    pub peak_ratio: f64,
}

fn check_drop_head(len: usize, drop_head: usize) -> Result<usize> {
    let available = len / 2 + 1;
    if drop_head >= available {
        return Err(Error::DropHeadTooLarge {
            drop_head,
            available,
        });
    }
    Ok(available)
}

fn specmurt_into(
    fft: &dyn Fft<f64>,
    col: &[f64],
    drop_head: usize,
    buf: &mut [Complex64],
    out: &mut [f64],
) {
    for (b, &v) in buf.iter_mut().zip(col) {
        *b = Complex64::new(v, 0.0);
    }
    fft.process(buf);
    for (o, b) in out.iter_mut().zip(&buf[drop_head..]) {
        *o = b.norm();
    }
}

pub fn specmurt_transform(col: &[f64], drop_head: usize) -> Result<SpecmurtFrame> {
    let available = check_drop_head(col.len(), drop_head)?;
    let fft = FftPlanner::new().plan_fft_forward(col.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); col.len()];
    let mut coeffs = vec![0.0; available - drop_head];
    specmurt_into(fft.as_ref(), col, drop_head, &mut buf, &mut coeffs);
    Ok(SpecmurtFrame {
        coeffs,
        dropped_head: drop_head,
    })
}

/// Specmurt vectors for every frame, computed once.
#[derive(Debug, Clone)]
pub struct SpecmurtCache {
    width: usize,
    coeffs: Vec<f64>,
}

impl SpecmurtCache {
    pub fn new(mag: &MagSpectrogram, drop_head: usize) -> Result<Self> {
        let bins = mag.bins();
        let width = check_drop_head(bins, drop_head)? - drop_head;
        let fft = FftPlanner::new().plan_fft_forward(bins);
        let mut coeffs = vec![0.0; width * mag.frames()];
        let mut buf = vec![Complex64::new(0.0, 0.0); bins];
        for (t, out) in coeffs.chunks_mut(width).enumerate() {
            specmurt_into(fft.as_ref(), mag.frame(t), drop_head, &mut buf, out);
        }
        Ok(Self { width, coeffs })
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.coeffs[t * self.width..(t + 1) * self.width]
    }
}

/// Fast deconvolution `H = F(IF(Y) / IF(Z))` with a Tikhonov-regularized
/// division. Holds FFT plans and scratch for one column length.
pub struct ShiftEstimator {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    y: Vec<Complex64>,
    z: Vec<Complex64>,
}

impl ShiftEstimator {
    /// Regularizer relative to the largest `|IF(Z)|`.
    pub const EPSILON: f64 = 1e-8;

    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            y: vec![Complex64::new(0.0, 0.0); len],
            z: vec![Complex64::new(0.0, 0.0); len],
        }
    }

    pub fn estimate(&mut self, target: &[f64], cand: &[f64]) -> Result<ShiftEstimate> {
        if target.len() != self.len || cand.len() != self.len {
            return Err(Error::DimensionMismatch(format!(
                "columns of length {} and {} for an estimator of length {}",
                target.len(),
                cand.len(),
                self.len
            )));
        }
        let n = self.len as f64;
        for ((y, z), (&a, &b)) in self
            .y
            .iter_mut()
            .zip(self.z.iter_mut())
            .zip(target.iter().zip(cand))
        {
            *y = Complex64::new(a, 0.0);
            *z = Complex64::new(b, 0.0);
        }
        self.inverse.process(&mut self.y);
        self.inverse.process(&mut self.z);
        let z_max = self.z.iter().map(|v| v.norm() / n).fold(0.0, f64::max);
        if !(z_max > 0.0) {
            return Err(Error::ZeroColumn);
        }
        let eps2 = (Self::EPSILON * z_max).powi(2);
        // Both transforms carry the same unnormalized 1/n factor, which
        // cancels in the ratio.
        for (y, z) in self.y.iter_mut().zip(&self.z) {
            let zn = z / n;
            *y = zn.conj() * (*y / n) / (zn.norm_sqr() + eps2);
        }
        self.forward.process(&mut self.y);

        let mut peak = (0usize, f64::NEG_INFINITY);
        let mut second = f64::NEG_INFINITY;
        for (i, h) in self.y.iter().enumerate() {
            let v = h.norm() / n;
            if v > peak.1 {
                second = peak.1;
                peak = (i, v);
            } else if v > second {
                second = v;
            }
        }
        let lag = if peak.0 < self.len / 2 {
            peak.0 as i64
        } else {
            peak.0 as i64 - self.len as i64
        };
        let peak_ratio = if second > 0.0 {
            peak.1 / second
        } else {
            f64::INFINITY
        };
        // Y = H * Z with H peaking at `lag` means Z sits `-lag` bins above Y.
        Ok(ShiftEstimate {
            delta: -lag as i32,
            peak_value: peak.1,
            peak_ratio,
        })
    }
}

/// One-shot form of [`ShiftEstimator::estimate`].
pub fn estimate_shift_deconv(target: &[f64], cand: &[f64]) -> Result<ShiftEstimate> {
    ShiftEstimator::new(target.len()).estimate(target, cand)
}

pub(crate) fn knn_specmurt_cached(
    cache: &SpecmurtCache,
    target: usize,
    candidates: &[usize],
    count: usize,
) -> Result<Vec<Neighbor>> {
    let pool = pool_without_target(target, candidates, count)?;
    let query = cache.frame(target);
    let scored = pool
        .into_iter()
        .map(|frame| Neighbor {
            frame,
            shift: 0,
            distance: sq_dist(query, cache.frame(frame)),
        })
        .collect();
    Ok(take_smallest(scored, count))
}

/// The `count` candidates closest to `target` in the specmurt domain, best first.
pub fn knn_specmurt(
    mag: &MagSpectrogram,
    target: usize,
    candidates: &[usize],
    count: usize,
    drop_head: usize,
) -> Result<Vec<usize>> {
    let cache = SpecmurtCache::new(mag, drop_head)?;
    Ok(knn_specmurt_cached(&cache, target, candidates, count)?
        .into_iter()
        .map(|n| n.frame)
        .collect())
}

/// Specmurt preselection of `k + pruning` frames, deconvolution alignment,
/// then the `k` best by aligned time-frequency distance. `max_shift` clamps
/// the estimated shifts when given.
#[allow(clippy::too_many_arguments)]
pub fn knn_specmurt_pruned(
    mag: &MagSpectrogram,
    target: usize,
    candidates: &[usize],
    k: usize,
    pruning: usize,
    max_shift: Option<usize>,
    drop_head: usize,
) -> Result<NeighborSet> {
    let cache = SpecmurtCache::new(mag, drop_head)?;
    let mut estimator = ShiftEstimator::new(mag.bins());
    knn_specmurt_pruned_cached(
        mag,
        &cache,
        &mut estimator,
        target,
        candidates,
        k,
        pruning,
        max_shift,
    )
}

/// Deconvolution shift of `cand` onto `target`, clamped; silent candidates stay put.
pub(crate) fn aligning_shift(
    estimator: &mut ShiftEstimator,
    target: &[f64],
    cand: &[f64],
    max_shift: Option<usize>,
) -> Result<i32> {
    match estimator.estimate(target, cand) {
        Ok(est) => Ok(match max_shift {
            Some(m) => est.delta.clamp(-(m as i32), m as i32),
            None => est.delta,
        }),
        Err(Error::ZeroColumn) => Ok(0),
        Err(e) => Err(e),
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn knn_specmurt_pruned_cached(
    mag: &MagSpectrogram,
    cache: &SpecmurtCache,
    estimator: &mut ShiftEstimator,
    target: usize,
    candidates: &[usize],
    k: usize,
    pruning: usize,
    max_shift: Option<usize>,
) -> Result<NeighborSet> {
    let pool = knn_specmurt_cached(cache, target, candidates, k + pruning)?;
    align_and_rerank(mag, estimator, target, pool, k, max_shift)
}

/// Aligns each preselected frame by deconvolution and keeps the `k` closest
/// under the aligned time-frequency distance.
pub(crate) fn align_and_rerank(
    mag: &MagSpectrogram,
    estimator: &mut ShiftEstimator,
    target: usize,
    pool: Vec<Neighbor>,
    k: usize,
    max_shift: Option<usize>,
) -> Result<NeighborSet> {
    let query = mag.frame(target);
    let prefix = SquarePrefix::new(query);
    let aligned = pool
        .into_iter()
        .map(|n| {
            let cand = mag.frame(n.frame);
            let shift = aligning_shift(estimator, query, cand, max_shift)?;
            Ok(Neighbor {
                frame: n.frame,
                shift,
                distance: shifted_distance(query, cand, shift, &prefix),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NeighborSet {
        target,
        neighbors: take_smallest(aligned, k),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::shiftkam::shift_frame;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn circshift(col: &[f64], d: usize) -> Vec<f64> {
        let n = col.len();
        (0..n).map(|f| col[(f + n - d % n) % n]).collect()
    }

    fn harmonic(len: usize, root: f64, partials: usize) -> Vec<f64> {
        (0..len)
            .map(|f| {
                (1..=partials)
                    .map(|k| {
                        let pos = root + 24.0 * (k as f64).log2();
                        (-0.5 * (f as f64 - pos).powi(2)).exp() / k as f64
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn constant_column_has_no_retained_energy() {
        let s = specmurt_transform(&[2.5; 32], 1).unwrap();
        assert_eq!(s.coeffs.len(), 16);
        assert!(s.coeffs.iter().all(|&c| c < 1e-12));
    }

    #[test]
    fn drop_head_must_leave_coefficients() {
        assert!(matches!(
            specmurt_transform(&[1.0; 8], 5),
            Err(Error::DropHeadTooLarge {
                drop_head: 5,
                available: 5
            })
        ));
    }

    #[test]
    fn impulse_pair_follows_cosine_pattern() {
        let (len, d) = (64usize, 9usize);
        let mut col = vec![0.0; len];
        col[5] = 1.0;
        col[5 + d] = 1.0;
        let s = specmurt_transform(&col, 0).unwrap();
        for (k, &c) in s.coeffs.iter().enumerate() {
            // Direct DFT as the reference.
            let (re, im) = col
                .iter()
                .enumerate()
                .fold((0.0, 0.0), |(re, im), (n, &x)| {
                    let a = -2.0 * PI * (k * n) as f64 / len as f64;
                    (re + x * a.cos(), im + x * a.sin())
                });
            let direct = (re * re + im * im).sqrt();
            let closed = (2.0 * (PI * (k * d) as f64 / len as f64).cos()).abs();
            assert!((c - direct).abs() < 1e-9);
            assert!((c - closed).abs() < 1e-9);
        }
    }

    #[test]
    fn identical_columns_give_zero_lag() {
        let y = harmonic(96, 20.0, 5);
        let est = estimate_shift_deconv(&y, &y).unwrap();
        assert_eq!(est.delta, 0);
        assert!((est.peak_value - 1.0).abs() < 1e-6);
        assert!(est.peak_ratio > 1e3);
    }

    #[test]
    fn circular_shift_sign_matches_shift_frame() {
        let y = harmonic(96, 20.0, 5);
        let z = circshift(&y, 5);
        let est = estimate_shift_deconv(&y, &z).unwrap();
        assert_eq!(est.delta, 5);
        // Reading 5 bins ahead puts Z back on Y.
        let aligned = shift_frame(&z, est.delta);
        for f in 0..96 - 5 {
            assert!((aligned[f] - y[f]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_candidate_is_rejected() {
        let y = harmonic(32, 4.0, 2);
        assert!(matches!(
            estimate_shift_deconv(&y, &[0.0; 32]),
            Err(Error::ZeroColumn)
        ));
    }

    #[test]
    fn padded_transposition_matches_exhaustive_search() {
        let y = harmonic(240, 40.0, 6);
        let z = shift_frame(&y, -6); // three semitones up
        let est = estimate_shift_deconv(&y, &z).unwrap();
        let prefix = SquarePrefix::new(&y);
        let oracle = (-120..120)
            .min_by(|&a, &b| {
                shifted_distance(&y, &z, a, &prefix)
                    .total_cmp(&shifted_distance(&y, &z, b, &prefix))
            })
            .unwrap();
        assert!((est.delta - oracle).abs() <= 1, "{} vs {oracle}", est.delta);
    }

    #[test]
    fn transposed_tone_outranks_noise() {
        let tone = harmonic(120, 15.0, 4);
        let up = shift_frame(&tone, -11);
        let noise: Vec<f64> = (0..120)
            .map(|i| ((i * 7919) % 101) as f64 / 300.0)
            .collect();
        let m = MagSpectrogram::from_columns(&[tone, noise, up]).unwrap();
        assert_eq!(knn_specmurt(&m, 0, &[1, 2], 1, 1).unwrap(), vec![2]);
    }

    #[test]
    fn pruned_selects_transposed_copies() {
        let tone = harmonic(120, 20.0, 5);
        let mut cols = vec![tone.clone()];
        let distractor = |seed: usize| -> Vec<f64> {
            (0..120)
                .map(|i| (((i + 3) * (seed + 11) * 2654435761) % 997) as f64 / 2000.0)
                .collect()
        };
        for (i, d) in [4, -7, 10].into_iter().enumerate() {
            cols.push(shift_frame(&tone, d));
            cols.push(distractor(2 * i));
            cols.push(distractor(2 * i + 1));
        }
        let m = MagSpectrogram::from_columns(&cols).unwrap();
        let cands: Vec<usize> = (1..cols.len()).collect();
        let n = knn_specmurt_pruned(&m, 0, &cands, 3, 6, Some(48), 1).unwrap();
        let mut got: Vec<(usize, i32)> = n.neighbors.iter().map(|n| (n.frame, n.shift)).collect();
        got.sort();
        assert_eq!(got, vec![(1, -4), (4, 7), (7, -10)]);
    }

    #[test]
    fn pruning_keeps_the_closest_aligned_frames() {
        let data: Vec<f64> = (0..48 * 20)
            .map(|i| ((i * 37 + 11) % 53) as f64 / 53.0)
            .collect();
        let m = MagSpectrogram::from_frames(48, 20, data).unwrap();
        let cands: Vec<usize> = (1..20).collect();
        let (k, p) = (4, 8);
        let n = knn_specmurt_pruned(&m, 0, &cands, k, p, Some(12), 1).unwrap();
        // Recompute the whole (K + P) pool and check the kept ones are the best.
        let pool = knn_specmurt(&m, 0, &cands, k + p, 1).unwrap();
        let mut est = ShiftEstimator::new(48);
        let prefix = SquarePrefix::new(m.frame(0));
        let mut dists: Vec<f64> = pool
            .iter()
            .map(|&c| {
                let s = aligning_shift(&mut est, m.frame(0), m.frame(c), Some(12)).unwrap();
                shifted_distance(m.frame(0), m.frame(c), s, &prefix)
            })
            .collect();
        dists.sort_by(f64::total_cmp);
        let worst_kept = n.neighbors.last().unwrap().distance;
        assert!(dists[k..].iter().all(|&d| d >= worst_kept));
    }

    #[test]
    fn zero_pruning_is_the_plain_accelerated_kernel() {
        let data: Vec<f64> = (0..32 * 12).map(|i| ((i * 29 + 5) % 41) as f64).collect();
        let m = MagSpectrogram::from_frames(32, 12, data).unwrap();
        let cands: Vec<usize> = (0..12).collect();
        let n = knn_specmurt_pruned(&m, 3, &cands, 5, 0, None, 1).unwrap();
        let mut frames: Vec<usize> = n.neighbors.iter().map(|n| n.frame).collect();
        frames.sort();
        let mut plain = knn_specmurt(&m, 3, &cands, 5, 1).unwrap();
        plain.sort();
        assert_eq!(frames, plain);
    }

    proptest! {
        #[test]
        fn circular_shift_invariance(col in prop::collection::vec(0.0f64..1.0, 40), d in 0usize..40) {
            let a = specmurt_transform(&col, 1).unwrap();
            let b = specmurt_transform(&circshift(&col, d), 1).unwrap();
            for (x, y) in a.coeffs.iter().zip(&b.coeffs) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn padded_shift_is_nearly_invariant(root in 30.0f64..60.0, d in -20i32..=20) {
            // Harmonic columns with negligible energy near the edges.
            let col = harmonic(200, root, 6);
            let moved = shift_frame(&col, d);
            let a = specmurt_transform(&col, 1).unwrap();
            let b = specmurt_transform(&moved, 1).unwrap();
            let rel = (sq_dist(&a.coeffs, &b.coeffs) / a.coeffs.iter().map(|v| v * v).sum::<f64>()).sqrt();
            prop_assert!(rel < 0.1, "relative distance {}", rel);
        }
    }
}
