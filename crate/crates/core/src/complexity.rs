//! Stage timings for the kernels, used to check how runtime scales with the
//! number of frames and the shift range.
//!
//! Every frame of a random magnitude matrix is treated as a target against
//! all other frames. Work runs on the calling thread so timings are not
//! perturbed by the thread pool.

use std::collections::BTreeMap;
use std::fmt;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kam::{knn_baseline, median_estimate, NeighborSet, Variant};
use crate::shiftkam::knn_shift_exhaustive;
use crate::specmurt::{align_and_rerank, knn_specmurt_cached, ShiftEstimator, SpecmurtCache};
use crate::timefreq::MagSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchSize {
    pub bins: usize,
    pub frames: usize,
    pub max_shift: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub variant: Variant,
    pub bins: usize,
    pub frames: usize,
    pub max_shift: usize,
    /// Frame similarity search (for the exhaustive kernel this includes alignment).
    pub similarity: Duration,
    /// Deconvolution alignment and re-ranking (specmurt variants only).
    pub alignment: Duration,
    /// Median estimation.
    pub estimation: Duration,
}

impl StageTiming {
    pub fn total(&self) -> Duration {
        self.similarity + self.alignment + self.estimation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchSettings {
    pub k: usize,
    /// Pruning surplus for the pruned specmurt kernel.
    pub pruning: usize,
    pub drop_head: usize,
    /// Timings are the minimum over this many repetitions.
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for BenchSettings {
    fn default() -> Self {
        Self {
            k: 8,
            pruning: 16,
            drop_head: 1,
            repetitions: 7,
            seed: 1,
        }
    }
}

pub fn random_magnitudes(bins: usize, frames: usize, seed: u64) -> MagSpectrogram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..bins * frames).map(|_| rng.random::<f64>()).collect();
    MagSpectrogram::from_frames(bins, frames, data).expect("uniform samples are nonnegative")
}

fn timed<T>(f: impl FnOnce() -> Result<T>) -> Result<(T, Duration)> {
    let start = Instant::now();
    let out = f()?;
    Ok((out, start.elapsed()))
}

/// One timed pass of `variant` over every frame of `mag`.
pub fn time_stages(
    mag: &MagSpectrogram,
    variant: Variant,
    max_shift: usize,
    settings: &BenchSettings,
) -> Result<StageTiming> {
    let frames: Vec<usize> = (0..mag.frames()).collect();
    let k = settings.k;
    let (nsets, similarity, alignment): (Vec<NeighborSet>, Duration, Duration) = match variant {
        Variant::Baseline => {
            let (n, d) = timed(|| {
                frames
                    .iter()
                    .map(|&t| knn_baseline(mag, t, &frames, k))
                    .collect()
            })?;
            (n, d, Duration::ZERO)
        }
        Variant::ShiftExhaustive => {
            let (n, d) = timed(|| {
                frames
                    .iter()
                    .map(|&t| knn_shift_exhaustive(mag, t, &frames, k, max_shift))
                    .collect()
            })?;
            (n, d, Duration::ZERO)
        }
        Variant::Specmurt | Variant::SpecmurtPruned => {
            let pruning = if variant == Variant::Specmurt {
                0
            } else {
                settings.pruning
            };
            let (pools, search) = timed(|| {
                let cache = SpecmurtCache::new(mag, settings.drop_head)?;
                frames
                    .iter()
                    .map(|&t| knn_specmurt_cached(&cache, t, &frames, k + pruning))
                    .collect::<Result<Vec<_>>>()
            })?;
            let (n, align) = timed(|| {
                let mut est = ShiftEstimator::new(mag.bins());
                pools
                    .into_iter()
                    .zip(&frames)
                    .map(|(pool, &t)| align_and_rerank(mag, &mut est, t, pool, k, Some(max_shift)))
                    .collect()
            })?;
            (n, search, align)
        }
    };
    let (_, estimation) = timed(|| {
        nsets
            .iter()
            .map(|n| median_estimate(mag, n))
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(StageTiming {
        variant,
        bins: mag.bins(),
        frames: mag.frames(),
        max_shift,
        similarity,
        alignment,
        estimation,
    })
}

fn keep_fastest(a: StageTiming, b: StageTiming) -> StageTiming {
    StageTiming {
        similarity: a.similarity.min(b.similarity),
        alignment: a.alignment.min(b.alignment),
        estimation: a.estimation.min(b.estimation),
        ..a
    }
}

/// Times `variant` on a random matrix of the given size, keeping the
/// per-stage minimum over the configured repetitions.
pub fn measure(size: BenchSize, variant: Variant, settings: &BenchSettings) -> Result<StageTiming> {
    let mag = random_magnitudes(size.bins, size.frames, settings.seed);
    let mut best: Option<StageTiming> = None;
    for _ in 0..settings.repetitions.max(1) {
        let run = time_stages(&mag, variant, size.max_shift, settings)?;
        best = Some(match best {
            None => run,
            Some(b) => keep_fastest(b, run),
        });
    }
    Ok(best.expect("at least one repetition"))
}

/// Log-log slope of a stage time against one size parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeFit {
    pub variant: Variant,
    /// `"frames"` (time vs T) or `"shifts"` (similarity time vs 2*max_shift + 1).
    pub parameter: &'static str,
    pub exponent: f64,
    pub points: usize,
}

/// Time ratio between two sizes where one parameter doubles.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Doubling {
    pub variant: Variant,
    /// `"frames"` compares total time, `"shifts"` the similarity stage.
    pub parameter: &'static str,
    pub from: usize,
    pub to: usize,
    pub ratio: f64,
    /// Range the ratio should fall in, when the variant has a scaling claim
    /// for this parameter.
    pub expected: Option<(f64, f64)>,
}

impl Doubling {
    pub fn in_band(&self) -> Option<bool> {
        self.expected
            .map(|(lo, hi)| (lo..=hi).contains(&self.ratio))
    }
}

/// Expected doubling ratio: quadratic in T for the baseline, linear in the
/// shift range for the exhaustive search, flat in the shift range for the
/// specmurt similarity stage.
pub fn expected_ratio(variant: Variant, parameter: &str) -> Option<(f64, f64)> {
    match (variant, parameter) {
        (Variant::Baseline, "frames") => Some((3.0, 6.0)),
        (Variant::ShiftExhaustive, "shifts") => Some((1.6, 2.4)),
        (Variant::Specmurt | Variant::SpecmurtPruned, "shifts") => Some((0.8, 1.2)),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub rows: Vec<StageTiming>,
    pub slopes: Vec<SlopeFit>,
    pub doublings: Vec<Doubling>,
}

impl BenchReport {
    /// `rounds[r][i]` is repetition `r` of plan entry `i`. Rows keep the
    /// fastest time per stage; doubling ratios are the median over rounds of
    /// the ratio measured within each round.
    pub fn from_rounds(rounds: &[Vec<StageTiming>]) -> Self {
        let rows: Vec<StageTiming> = (0..rounds.first().map_or(0, Vec::len))
            .map(|i| {
                rounds
                    .iter()
                    .map(|r| r[i].clone())
                    .reduce(keep_fastest)
                    .expect("at least one round")
            })
            .collect();
        let slopes = fit_slopes(&rows);
        let doublings = doublings(&rows)
            .into_iter()
            .map(|(i, j, mut d)| {
                let mut ratios: Vec<f64> = rounds
                    .iter()
                    .map(|r| stage_ratio(d.parameter, &r[i], &r[j]))
                    .collect();
                ratios.sort_by(f64::total_cmp);
                d.ratio = ratios[ratios.len() / 2];
                d
            })
            .collect();
        Self {
            rows,
            slopes,
            doublings,
        }
    }

    /// True when every doubling with an expected range lies inside it.
    pub fn scaling_holds(&self) -> bool {
        self.doublings.iter().all(|d| d.in_band() != Some(false))
    }
}

fn stage_ratio(parameter: &str, from: &StageTiming, to: &StageTiming) -> f64 {
    if parameter == "frames" {
        ratio(to.total(), from.total())
    } else {
        ratio(to.similarity, from.similarity)
    }
}

/// Row pairs `(i, j)` of one variant where exactly one of T and the shift
/// range doubles from row `i` to row `j` and everything else is equal.
pub fn doublings(rows: &[StageTiming]) -> Vec<(usize, usize, Doubling)> {
    let mut out = Vec::new();
    for (i, a) in rows.iter().enumerate() {
        for (j, b) in rows.iter().enumerate() {
            if a.variant != b.variant || a.bins != b.bins {
                continue;
            }
            let (parameter, from, to) = if a.max_shift == b.max_shift && b.frames == 2 * a.frames {
                ("frames", a.frames, b.frames)
            } else if a.frames == b.frames && a.max_shift > 0 && b.max_shift == 2 * a.max_shift {
                ("shifts", a.max_shift, b.max_shift)
            } else {
                continue;
            };
            let d = Doubling {
                variant: a.variant,
                parameter,
                from,
                to,
                ratio: stage_ratio(parameter, a, b),
                expected: expected_ratio(a.variant, parameter),
            };
            out.push((i, j, d));
        }
    }
    out
}

/// Sizes behind the scaling claims, at F = 232 (the 44.1 kHz axis). The
/// baseline needs large T before its quadratic search dominates the linear
/// median stage. The specmurt search is cheap per frame, so it also gets a
/// large T to keep each timed stage well above scheduler noise.
pub fn default_plan() -> Vec<(Variant, BenchSize)> {
    const F: usize = 232;
    let mut plan = Vec::new();
    for frames in [800, 1600] {
        plan.push((
            Variant::Baseline,
            BenchSize {
                bins: F,
                frames,
                max_shift: 48,
            },
        ));
    }
    for max_shift in [12, 24, 48] {
        plan.push((
            Variant::ShiftExhaustive,
            BenchSize {
                bins: F,
                frames: 100,
                max_shift,
            },
        ));
    }
    for variant in [Variant::Specmurt, Variant::SpecmurtPruned] {
        for max_shift in [12, 24, 48] {
            plan.push((
                variant,
                BenchSize {
                    bins: F,
                    frames: 1000,
                    max_shift,
                },
            ));
        }
    }
    plan
}

/// Times every entry of `plan`. Entries of one variant are measured as a
/// group after a discarded warm-up run, in rounds whose starting entry
/// rotates, so each size sees every position in the group equally often.
/// Speed changes on the machine (clock throttling after a heavy stage,
/// contention) then hit the sizes being compared alike.
pub fn run_plan(plan: &[(Variant, BenchSize)], settings: &BenchSettings) -> Result<BenchReport> {
    let mags: Vec<MagSpectrogram> = plan
        .iter()
        .map(|(_, s)| random_magnitudes(s.bins, s.frames, settings.seed))
        .collect();
    let reps = settings.repetitions.max(1);
    let mut rounds: Vec<Vec<Option<StageTiming>>> = vec![vec![None; plan.len()]; reps];
    let mut variants: Vec<Variant> = Vec::new();
    for &(v, _) in plan {
        if !variants.contains(&v) {
            variants.push(v);
        }
    }
    for variant in variants {
        let group: Vec<usize> = (0..plan.len()).filter(|&i| plan[i].0 == variant).collect();
        let run = |i: usize| time_stages(&mags[i], variant, plan[i].1.max_shift, settings);
        run(group[0])?;
        for (r, round) in rounds.iter_mut().enumerate() {
            for k in 0..group.len() {
                let i = group[(r + k) % group.len()];
                round[i] = Some(run(i)?);
            }
        }
    }
    let rounds: Vec<Vec<StageTiming>> = rounds
        .into_iter()
        .map(|r| {
            r.into_iter()
                .map(|t| t.expect("every entry timed"))
                .collect()
        })
        .collect();
    Ok(BenchReport::from_rounds(&rounds))
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Fits total time against T (rows sharing F and max_shift) and similarity
/// time against `2 * max_shift + 1` (rows sharing F and T).
pub fn fit_slopes(rows: &[StageTiming]) -> Vec<SlopeFit> {
    let mut by_frames: BTreeMap<(Variant, usize, usize), Vec<(f64, f64)>> = BTreeMap::new();
    let mut by_shift: BTreeMap<(Variant, usize, usize), Vec<(f64, f64)>> = BTreeMap::new();
    for r in rows {
        by_frames
            .entry((r.variant, r.bins, r.max_shift))
            .or_default()
            .push(((r.frames as f64).ln(), r.total().as_secs_f64().ln()));
        by_shift
            .entry((r.variant, r.bins, r.frames))
            .or_default()
            .push((
                ((2 * r.max_shift + 1) as f64).ln(),
                r.similarity.as_secs_f64().ln(),
            ));
    }
    let mut fits = Vec::new();
    for (parameter, groups) in [("frames", by_frames), ("shifts", by_shift)] {
        for ((variant, _, _), mut pts) in groups {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            pts.dedup_by(|a, b| a.0 == b.0);
            if pts.len() >= 2 {
                fits.push(SlopeFit {
                    variant,
                    parameter,
                    exponent: least_squares_slope(&pts),
                    points: pts.len(),
                });
            }
        }
    }
    fits
}

/// Every variant at every size.
pub fn run_bench(
    sizes: &[BenchSize],
    variants: &[Variant],
    settings: &BenchSettings,
) -> Result<BenchReport> {
    let plan: Vec<(Variant, BenchSize)> = sizes
        .iter()
        .flat_map(|&size| variants.iter().map(move |&v| (v, size)))
        .collect();
    run_plan(&plan, settings)
}

/// Ratio of stage times between two measurements.
pub fn ratio(num: Duration, den: Duration) -> f64 {
    num.as_secs_f64() / den.as_secs_f64()
}

impl fmt::Display for BenchReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16}{:>6}{:>7}{:>7}{:>14}{:>14}{:>14}{:>14}",
            "variant",
            "F",
            "T",
            "shift",
            "similarity_ms",
            "alignment_ms",
            "estimate_ms",
            "total_ms"
        )?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<16}{:>6}{:>7}{:>7}{:>14.3}{:>14.3}{:>14.3}{:>14.3}",
                r.variant.as_str(),
                r.bins,
                r.frames,
                r.max_shift,
                r.similarity.as_secs_f64() * 1e3,
                r.alignment.as_secs_f64() * 1e3,
                r.estimation.as_secs_f64() * 1e3,
                r.total().as_secs_f64() * 1e3,
            )?;
        }
        if !self.slopes.is_empty() {
            writeln!(f)?;
            writeln!(f, "log-log slopes")?;
            for s in &self.slopes {
                let what = if s.parameter == "frames" {
                    "total vs T"
                } else {
                    "similarity vs 2*shift+1"
                };
                writeln!(
                    f,
                    "{:<16}{:<26}{:>8.2}  ({} points)",
                    s.variant.as_str(),
                    what,
                    s.exponent,
                    s.points
                )?;
            }
        }
        if !self.doublings.is_empty() {
            writeln!(f)?;
            writeln!(f, "doubling ratios")?;
            for d in &self.doublings {
                let stage = if d.parameter == "frames" {
                    "total, T"
                } else {
                    "similarity, shift"
                };
                let verdict = match (d.expected, d.in_band()) {
                    (Some((lo, hi)), Some(ok)) => format!(
                        "expected [{lo}, {hi}] {}",
                        if ok { "ok" } else { "OUT OF RANGE" }
                    ),
                    _ => String::new(),
                };
                writeln!(
                    f,
                    "{:<16}{:<18}{:>5} -> {:<5}{:>8.2}  {verdict}",
                    d.variant.as_str(),
                    stage,
                    d.from,
                    d.to,
                    d.ratio
                )?;
            }
        }
        Ok(())
    }
}
