//! Baseline kernel additive modelling.
//!
//! Every interfered frame is rebuilt from the per-bin median of its K most
//! similar clean frames. The median is the minimiser of the summed absolute
//! deviation, so up to half of the neighbour values may be outliers without
//! moving the estimate. The remaining energy is attributed to the
//! interference and a soft mask splits the complex spectrogram.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::shiftkam;
use crate::specmurt::{self, SpecmurtCache};
use crate::timefreq::{magnitude, ComplexSpectrogram, MagSpectrogram, SoftMask};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub frame: usize,
    /// Read offset in bins: output bin `f` takes the neighbour's bin `f + shift`.
    pub shift: i32,
    /// Squared Euclidean distance under which the neighbour was selected.
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborSet {
    pub target: usize,
    pub neighbors: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Baseline,
    ShiftExhaustive,
    Specmurt,
    SpecmurtPruned,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Baseline,
        Variant::ShiftExhaustive,
        Variant::Specmurt,
        Variant::SpecmurtPruned,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Baseline => "baseline",
            Variant::ShiftExhaustive => "shift",
            Variant::Specmurt => "specmurt",
            Variant::SpecmurtPruned => "specmurt-pruned",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "shift" | "shift_exhaustive" | "shift-exhaustive" => Ok(Variant::ShiftExhaustive),
            "specmurt" => Ok(Variant::Specmurt),
            "specmurt-pruned" | "specmurt_pruned" => Ok(Variant::SpecmurtPruned),
            other => Err(Error::InvalidConfig(format!("unknown variant '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationConfig {
    pub k: usize,
    /// Largest frequency shift (in bins) considered by the shift-invariant kernels.
    pub max_shift: usize,
    /// Extra candidates drawn by the pruned specmurt kernel.
    pub pruning: usize,
    pub variant: Variant,
    /// Interfered frames. Only these are re-estimated.
    pub support: BTreeSet<usize>,
    /// Leading specmurt coefficients ignored in the similarity search.
    pub drop_head: usize,
    /// Clamp deconvolution shifts to `max_shift`. When false, any shift found
    /// is accepted.
    pub clamp_shift: bool,
}

impl Default for SeparationConfig {
    fn default() -> Self {
        Self {
            k: 300,
            max_shift: 48,
            pruning: 600,
            variant: Variant::Baseline,
            support: BTreeSet::new(),
            drop_head: 1,
            clamp_shift: true,
        }
    }
}

impl SeparationConfig {
    /// Frames outside the support, in ascending order.
    pub fn candidates(&self, frames: usize) -> Vec<usize> {
        (0..frames).filter(|t| !self.support.contains(t)).collect()
    }

    /// Size of the candidate list the selected variant draws from.
    pub fn required_pool(&self) -> usize {
        match self.variant {
            Variant::SpecmurtPruned => self.k + self.pruning,
            _ => self.k,
        }
    }

    pub fn validate(&self, frames: usize) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidConfig("k must be >= 1".into()));
        }
        if let Some(&last) = self.support.iter().next_back() {
            if last >= frames {
                return Err(Error::InvalidConfig(format!(
                    "support frame {last} is beyond the last frame {}",
                    frames.saturating_sub(1)
                )));
            }
        }
        if self.support.is_empty() {
            return Ok(());
        }
        let available = frames - self.support.len();
        let required = self.required_pool();
        if available < required {
            return Err(Error::PoolTooSmall {
                available,
                required,
            });
        }
        Ok(())
    }
}

/// Squared Euclidean distance between two equally long columns.
#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| {
        let d = x - y;
        acc + d * d
    })
}

/// Ascending (distance, frame, shift) order.
pub(crate) fn neighbor_order(a: &Neighbor, b: &Neighbor) -> Ordering {
    a.distance
        .total_cmp(&b.distance)
        .then(a.frame.cmp(&b.frame))
        .then(a.shift.cmp(&b.shift))
}

/// Keeps the `k` smallest entries, sorted.
pub(crate) fn take_smallest(mut pool: Vec<Neighbor>, k: usize) -> Vec<Neighbor> {
    if pool.len() > k {
        pool.select_nth_unstable_by(k - 1, neighbor_order);
        pool.truncate(k);
    }
    pool.sort_by(neighbor_order);
    pool
}

/// Candidates with the target removed; fails if fewer than `needed` remain.
pub(crate) fn pool_without_target(
    target: usize,
    candidates: &[usize],
    needed: usize,
) -> Result<Vec<usize>> {
    let pool: Vec<usize> = candidates
        .iter()
        .copied()
        .filter(|&c| c != target)
        .collect();
    if pool.len() < needed {
        return Err(Error::PoolTooSmall {
            available: pool.len(),
            required: needed,
        });
    }
    Ok(pool)
}

/// K nearest frames to `target` by squared Euclidean distance; all shifts 0.
pub fn knn_baseline(
    mag: &MagSpectrogram,
    target: usize,
    candidates: &[usize],
    k: usize,
) -> Result<NeighborSet> {
    let pool = pool_without_target(target, candidates, k)?;
    let query = mag.frame(target);
    let scored = pool
        .into_iter()
        .map(|frame| Neighbor {
            frame,
            shift: 0,
            distance: sq_dist(query, mag.frame(frame)),
        })
        .collect();
    Ok(NeighborSet {
        target,
        neighbors: take_smallest(scored, k),
    })
}

/// Lower median (`sorted[(n - 1) / 2]`) of a scratch buffer.
pub(crate) fn lower_median(values: &mut [f64]) -> f64 {
    let mid = (values.len() - 1) / 2;
    *values.select_nth_unstable_by(mid, |a, b| a.total_cmp(b)).1
}

/// Per-bin median over the neighbour values, reading `mag(f + shift, frame)`
/// and zero where that falls off the axis.
pub fn median_estimate(mag: &MagSpectrogram, nset: &NeighborSet) -> Result<Vec<f64>> {
    if nset.neighbors.is_empty() {
        return Err(Error::EmptyNeighborSet);
    }
    let bins = mag.bins();
    let columns: Vec<(&[f64], i64)> = nset
        .neighbors
        .iter()
        .map(|n| (mag.frame(n.frame), n.shift as i64))
        .collect();
    let mut values = vec![0.0; columns.len()];
    Ok((0..bins as i64)
        .map(|f| {
            for (v, &(col, shift)) in values.iter_mut().zip(&columns) {
                *v = usize::try_from(f + shift)
                    .ok()
                    .and_then(|src| col.get(src))
                    .copied()
                    .unwrap_or(0.0);
            }
            lower_median(&mut values)
        })
        .collect())
}

/// `S / (N + S)` with `N = max(X - S, 0)` and `0 / 0 = 0`.
pub fn build_soft_mask(source_est: &MagSpectrogram, mixture: &MagSpectrogram) -> Result<SoftMask> {
    if source_est.bins() != mixture.bins() || source_est.frames() != mixture.frames() {
        return Err(Error::DimensionMismatch(format!(
            "estimate is {}x{}, mixture is {}x{}",
            source_est.bins(),
            source_est.frames(),
            mixture.bins(),
            mixture.frames()
        )));
    }
    let bins = mixture.bins();
    let data = source_est
        .as_slice()
        .iter()
        .zip(mixture.as_slice())
        .enumerate()
        .map(|(i, (&s, &x))| {
            if !(s >= 0.0) || !(x >= 0.0) {
                let value = if s >= 0.0 { x } else { s };
                return Err(Error::NegativeMagnitude {
                    bin: i % bins,
                    frame: i / bins,
                    value,
                });
            }
            let residual = (x - s).max(0.0);
            let total = residual + s;
            Ok(if total > 0.0 { s / total } else { 0.0 })
        })
        .collect::<Result<Vec<_>>>()?;
    SoftMask::from_frames(bins, mixture.frames(), data)
}

/// Neighbour sets for every support frame, in ascending frame order.
pub fn neighbor_sets(mag: &MagSpectrogram, config: &SeparationConfig) -> Result<Vec<NeighborSet>> {
    config.validate(mag.frames())?;
    let targets: Vec<usize> = config.support.iter().copied().collect();
    if targets.is_empty() {
        return Ok(Vec::new());
    }
    let candidates = config.candidates(mag.frames());
    let k = config.k;
    match config.variant {
        Variant::Baseline => targets
            .par_iter()
            .map(|&t| knn_baseline(mag, t, &candidates, k))
            .collect(),
        Variant::ShiftExhaustive => targets
            .par_iter()
            .map(|&t| shiftkam::knn_shift_exhaustive(mag, t, &candidates, k, config.max_shift))
            .collect(),
        Variant::Specmurt | Variant::SpecmurtPruned => {
            let cache = SpecmurtCache::new(mag, config.drop_head)?;
            let pruning = if config.variant == Variant::Specmurt {
                0
            } else {
                config.pruning
            };
            let clamp = config.clamp_shift.then_some(config.max_shift);
            targets
                .par_iter()
                .map_init(
                    || specmurt::ShiftEstimator::new(mag.bins()),
                    |est, &t| {
                        specmurt::knn_specmurt_pruned_cached(
                            mag,
                            &cache,
                            est,
                            t,
                            &candidates,
                            k,
                            pruning,
                            clamp,
                        )
                    },
                )
                .collect()
        }
    }
}

/// Output of [`separate`].
#[derive(Debug, Clone)]
pub struct Separation {
    pub source: ComplexSpectrogram,
    pub interference: ComplexSpectrogram,
    pub mask: SoftMask,
    /// Magnitude estimate of the source (equal to the mixture off the support).
    pub estimate: MagSpectrogram,
    pub neighbors: Vec<NeighborSet>,
}

/// Source magnitude estimate: mixture magnitudes off the support, medians on it.
pub fn estimate_source(mag: &MagSpectrogram, nsets: &[NeighborSet]) -> Result<MagSpectrogram> {
    let columns: Vec<(usize, Vec<f64>)> = nsets
        .par_iter()
        .map(|n| median_estimate(mag, n).map(|c| (n.target, c)))
        .collect::<Result<_>>()?;
    let mut est = mag.clone();
    for (t, col) in columns {
        est.frame_mut(t).copy_from_slice(&col);
    }
    Ok(est)
}

/// Separates with precomputed neighbour sets. Frames without a neighbour set
/// keep mask 1.
pub fn separate_with_neighbors(
    spect: &ComplexSpectrogram,
    nsets: Vec<NeighborSet>,
) -> Result<Separation> {
    let mag = magnitude(spect);
    if let Some(n) = nsets.iter().find(|n| n.target >= mag.frames()) {
        return Err(Error::DimensionMismatch(format!(
            "neighbour set targets frame {}",
            n.target
        )));
    }
    let estimate = estimate_source(&mag, &nsets)?;
    let mask = build_soft_mask(&estimate, &mag)?;
    // Off-support frames must pass through bit-exactly.
    let mut mask_data = vec![1.0; mag.bins() * mag.frames()];
    for n in &nsets {
        let range = n.target * mag.bins()..(n.target + 1) * mag.bins();
        mask_data[range.clone()].copy_from_slice(&mask.as_slice()[range]);
    }
    let mask = SoftMask::from_frames(mag.bins(), mag.frames(), mask_data)?;
    let (source, interference) = spect.split(&mask)?;
    Ok(Separation {
        source,
        interference,
        mask,
        estimate,
        neighbors: nsets,
    })
}

/// Runs the configured kernel on the support frames and splits the mixture.
pub fn separate(spect: &ComplexSpectrogram, config: &SeparationConfig) -> Result<Separation> {
    let nsets = neighbor_sets(&magnitude(spect), config)?;
    separate_with_neighbors(spect, nsets)
}

/// Multichannel separation: neighbour sets come from the channel-mean
/// magnitude and are shared by all channels.
pub fn separate_channels(
    channels: &[ComplexSpectrogram],
    config: &SeparationConfig,
) -> Result<Vec<Separation>> {
    let mags: Vec<MagSpectrogram> = channels.iter().map(magnitude).collect();
    let mean = MagSpectrogram::mean(&mags)?;
    let nsets = neighbor_sets(&mean, config)?;
    channels
        .iter()
        .map(|c| separate_with_neighbors(c, nsets.clone()))
        .collect()
}
