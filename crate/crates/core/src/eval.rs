//! Synthetic evaluation: additive-synthesis melodies and chord progressions
//! overlaid with short interference bursts, scored by SDR on the interfered
//! segment.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kam::{separate, SeparationConfig, Variant};
use crate::timefreq::{forward_logfreq, inverse_logfreq, TransformParams};

/// Ceiling for SDR values, reached when the error is negligible.
pub const SDR_CEILING_DB: f64 = 100.0;

const RAMP_SECONDS: f64 = 0.01;

/// Amplitude of partial `k` (1-based) relative to the fundamental.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartialLaw {
    /// `1/k`, all partials.
    Harmonic,
    /// `1/k`, odd partials only.
    OddHarmonic,
    /// `1/k^2`.
    Steep,
    /// `1/sqrt(k)`.
    Bright,
}

impl PartialLaw {
    pub fn amplitude(self, k: usize) -> f64 {
        let k = k as f64;
        match self {
            PartialLaw::Harmonic => 1.0 / k,
            PartialLaw::OddHarmonic if (k as usize).is_multiple_of(2) => 0.0,
            PartialLaw::OddHarmonic => 1.0 / k,
            PartialLaw::Steep => 1.0 / (k * k),
            PartialLaw::Bright => 1.0 / k.sqrt(),
        }
    }
}

/// Sum of `n_partials` sinusoids at `k * f0` with raised-cosine attack and
/// release ramps.
pub fn synthesize_note(
    f0: f64,
    duration: f64,
    n_partials: usize,
    law: PartialLaw,
    sample_rate: u32,
) -> Result<Vec<f64>> {
    let sr = sample_rate as f64;
    if f0 * n_partials as f64 >= sr / 2.0 {
        return Err(Error::Scene(format!(
            "partial {n_partials} of {f0} Hz aliases at {sample_rate} Hz"
        )));
    }
    let len = (duration * sr).round() as usize;
    let ramp = ((RAMP_SECONDS * sr).ceil() as usize).min(len / 2).max(1);
    Ok((0..len)
        .map(|i| {
            let t = i as f64 / sr;
            let tone: f64 = (1..=n_partials)
                .map(|k| law.amplitude(k) * (2.0 * PI * k as f64 * f0 * t).sin())
                .sum();
            let edge = i.min(len - 1 - i);
            let gain = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            tone * gain
        })
        .collect())
}

pub fn midi_to_hz(note: u8) -> f64 {
    440.0 * 2f64.powf((note as f64 - 69.0) / 12.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Timbre {
    pub name: &'static str,
    pub law: PartialLaw,
    pub partials: usize,
    /// Exponential amplitude decay rate in 1/s.
    pub decay: f64,
}

pub const TIMBRES: [Timbre; 4] = [
    Timbre {
        name: "saw",
        law: PartialLaw::Harmonic,
        partials: 10,
        decay: 0.0,
    },
    Timbre {
        name: "reed",
        law: PartialLaw::OddHarmonic,
        partials: 11,
        decay: 0.5,
    },
    Timbre {
        name: "flute",
        law: PartialLaw::Steep,
        partials: 6,
        decay: 0.0,
    },
    Timbre {
        name: "pluck",
        law: PartialLaw::Bright,
        partials: 8,
        decay: 3.0,
    },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Content {
    Melody,
    Chords,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Repeated,
    NotRepeated,
}

impl fmt::Display for Content {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Content::Melody => "melody",
            Content::Chords => "chords",
        })
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Placement::Repeated => "repeated",
            Placement::NotRepeated => "not_repeated",
        })
    }
}

/// A rendered musical passage: the signal and the sample span of each
/// segment (a note, or a chord) with the MIDI pitches it holds.
#[derive(Debug, Clone)]
pub struct Performance {
    pub signal: Vec<f64>,
    pub segments: Vec<(Vec<u8>, Range<usize>)>,
    pub content: Content,
    pub sample_rate: u32,
}

/// Renders consecutive segments of equal duration and normalizes the peak to 0.5.
pub fn render(
    segments: &[Vec<u8>],
    segment_seconds: f64,
    timbre: &Timbre,
    content: Content,
    sample_rate: u32,
) -> Result<Performance> {
    let seg_len = (segment_seconds * sample_rate as f64).round() as usize;
    let mut signal = vec![0.0; seg_len * segments.len()];
    let mut spans = Vec::with_capacity(segments.len());
    for (i, notes) in segments.iter().enumerate() {
        let start = i * seg_len;
        for &note in notes {
            let tone = synthesize_note(
                midi_to_hz(note),
                segment_seconds,
                timbre.partials,
                timbre.law,
                sample_rate,
            )?;
            for (j, v) in tone.iter().enumerate() {
                let t = j as f64 / sample_rate as f64;
                signal[start + j] += v * (-timbre.decay * t).exp();
            }
        }
        spans.push((notes.clone(), start..start + seg_len));
    }
    let peak = signal.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        signal.iter_mut().for_each(|v| *v *= 0.5 / peak);
    }
    Ok(Performance {
        signal,
        segments: spans,
        content,
        sample_rate,
    })
}

/// Five monophonic melodies, each with repeated and unique notes.
pub fn melodies() -> Vec<Vec<Vec<u8>>> {
    let m: [&[u8]; 5] = [
        &[60, 62, 64, 65, 67, 65, 64, 62, 60, 69],
        &[67, 64, 62, 64, 67, 72, 71, 69, 67, 64],
        &[62, 65, 69, 67, 65, 64, 62, 60, 74, 65],
        &[64, 64, 65, 67, 71, 67, 65, 64, 62, 60],
        &[57, 60, 64, 69, 68, 64, 60, 57, 59, 62],
    ];
    m.iter()
        .map(|notes| notes.iter().map(|&n| vec![n]).collect())
        .collect()
}

/// Five triad progressions, each with repeated and unique chords.
pub fn chord_progressions() -> Vec<Vec<Vec<u8>>> {
    let c = vec![60, 64, 67];
    let d = vec![62, 66, 69];
    let e = vec![64, 68, 71];
    let f = vec![65, 69, 72];
    let g = vec![67, 71, 74];
    let a = vec![57, 61, 64];
    let bb = vec![58, 62, 65];
    let am = vec![57, 60, 64];
    let bm = vec![59, 62, 66];
    let dm = vec![62, 65, 69];
    let em = vec![64, 67, 71];
    let gm = vec![55, 58, 62];
    let fsm = vec![66, 69, 73];
    vec![
        vec![
            c.clone(),
            f.clone(),
            g.clone(),
            c.clone(),
            am.clone(),
            f.clone(),
            g.clone(),
            c.clone(),
        ],
        vec![
            am.clone(),
            dm.clone(),
            e.clone(),
            am.clone(),
            f.clone(),
            dm.clone(),
            e,
            am.clone(),
        ],
        vec![
            g.clone(),
            em.clone(),
            c.clone(),
            d.clone(),
            g.clone(),
            em,
            am,
            d.clone(),
        ],
        vec![d.clone(), a.clone(), bm, g.clone(), d, a, g, fsm],
        vec![f.clone(), c.clone(), dm, bb, f, c.clone(), gm, c],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterferenceKind {
    /// Band-passed noise burst.
    Cough,
    /// Low-frequency thump.
    DoorSlam,
    /// Amplitude-modulated broadband scrape.
    ChairDrag,
    /// Train of decaying clicks.
    Drop,
}

impl InterferenceKind {
    pub const ALL: [InterferenceKind; 4] = [
        InterferenceKind::Cough,
        InterferenceKind::DoorSlam,
        InterferenceKind::ChairDrag,
        InterferenceKind::Drop,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            InterferenceKind::Cough => "cough",
            InterferenceKind::DoorSlam => "door_slam",
            InterferenceKind::ChairDrag => "chair_drag",
            InterferenceKind::Drop => "drop",
        }
    }
}

/// A recorded interference, mono, at the grid's sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedClip {
    pub name: String,
    pub samples: Vec<f64>,
}

impl RecordedClip {
    /// Reads a WAV clip, averaging channels. No resampling is done, so the
    /// clip must already be at `sample_rate`.
    pub fn load(path: impl AsRef<std::path::Path>, sample_rate: u32) -> Result<Self> {
        let path = path.as_ref();
        let audio = crate::wav::read_wav(path)?;
        if audio.sample_rate != sample_rate {
            return Err(Error::Scene(format!(
                "clip {} is at {} Hz, the grid runs at {sample_rate} Hz",
                path.display(),
                audio.sample_rate
            )));
        }
        let n = audio.channels.len() as f64;
        let samples = (0..audio.len())
            .map(|i| audio.channels.iter().map(|c| c[i]).sum::<f64>() / n)
            .collect();
        let name = path
            .file_stem()
            .map_or_else(|| "clip".into(), |s| s.to_string_lossy().into_owned());
        Ok(Self { name, samples })
    }
}

/// RBJ band-pass biquad (constant 0 dB peak gain).
fn bandpass(x: &[f64], centre: f64, q: f64, sample_rate: f64) -> Vec<f64> {
    let w0 = 2.0 * PI * centre / sample_rate;
    let alpha = w0.sin() / (2.0 * q);
    let a0 = 1.0 + alpha;
    let (b0, b2) = (alpha / a0, -alpha / a0);
    let (a1, a2) = (-2.0 * w0.cos() / a0, (1.0 - alpha) / a0);
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = b0 * v + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = v;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

/// Synthetic stand-in for a recorded interference clip.
pub fn interference_clip(
    kind: InterferenceKind,
    duration: f64,
    sample_rate: u32,
    rng: &mut impl Rng,
) -> Vec<f64> {
    let sr = sample_rate as f64;
    let len = (duration * sr).round() as usize;
    let noise: Vec<f64> = (0..len).map(|_| StandardNormal.sample(rng)).collect();
    let t = |i: usize| i as f64 / sr;
    let fade = |i: usize| {
        let ramp = (0.005 * sr) as usize;
        let edge = i.min(len - 1 - i);
        if edge < ramp {
            edge as f64 / ramp as f64
        } else {
            1.0
        }
    };
    let out: Vec<f64> = match kind {
        InterferenceKind::Cough => {
            let a = bandpass(&noise, 700.0 + 300.0 * rng.random::<f64>(), 1.2, sr);
            let b = bandpass(&noise, 2200.0, 2.0, sr);
            (0..len)
                .map(|i| {
                    (a[i] + 0.5 * b[i])
                        * (1.0 - (-t(i) / 0.02).exp())
                        * (-t(i) / (duration / 3.0)).exp()
                })
                .collect()
        }
        InterferenceKind::DoorSlam => {
            let body = bandpass(&noise, 90.0, 0.8, sr);
            let f1 = 60.0 + 20.0 * rng.random::<f64>();
            (0..len)
                .map(|i| {
                    let env = (-t(i) / 0.09).exp();
                    (2.0 * (2.0 * PI * f1 * t(i)).sin()
                        + (2.0 * PI * 1.7 * f1 * t(i)).sin()
                        + 3.0 * body[i])
                        * env
                })
                .collect()
        }
        InterferenceKind::ChairDrag => {
            let rate = 20.0 + 15.0 * rng.random::<f64>();
            let mut prev = 0.0;
            (0..len)
                .map(|i| {
                    let hp = noise[i] - 0.9 * prev;
                    prev = noise[i];
                    let env = (PI * i as f64 / len as f64).sin();
                    hp * env * (0.6 + 0.4 * (2.0 * PI * rate * t(i)).sin())
                })
                .collect()
        }
        InterferenceKind::Drop => {
            let mut onsets = vec![0.0];
            for _ in 0..3 {
                onsets.push(0.1 * duration + 0.8 * duration * rng.random::<f64>());
            }
            (0..len)
                .map(|i| {
                    onsets
                        .iter()
                        .enumerate()
                        .filter(|(_, &o)| t(i) >= o)
                        .map(|(n, &o)| noise[i] * (-(t(i) - o) / 0.015).exp() / (n as f64 + 1.0))
                        .sum()
                })
                .collect()
        }
    };
    out.iter().enumerate().map(|(i, v)| v * fade(i)).collect()
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub id: String,
    pub content: Content,
    pub placement: Placement,
    pub clean: Vec<f64>,
    pub interference: Vec<f64>,
    pub mixture: Vec<f64>,
    /// Sample span in which the interference is nonzero.
    pub extent: Range<usize>,
    /// Frames overlapping `extent`.
    pub support: Vec<usize>,
    pub params: TransformParams,
}

impl SyntheticScene {
    /// Samples owned by the support frames; SDR is measured here.
    pub fn eval_range(&self) -> Range<usize> {
        self.params
            .frames_to_samples(&self.support, self.clean.len())
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Segment to overlay: a segment whose pitch set recurs (repeated) or occurs
/// once (not repeated), avoiding the first and last segment when possible and
/// otherwise preferring the middle of the passage.
pub fn choose_segment(segments: &[Vec<u8>], placement: Placement) -> Option<usize> {
    let count = |s: &Vec<u8>| segments.iter().filter(|o| *o == s).count();
    let eligible: Vec<usize> = (0..segments.len())
        .filter(|&i| match placement {
            Placement::Repeated => count(&segments[i]) > 1,
            Placement::NotRepeated => count(&segments[i]) == 1,
        })
        .collect();
    let mid = segments.len() as f64 / 2.0 - 0.5;
    let interior: Vec<usize> = eligible
        .iter()
        .copied()
        .filter(|&i| i > 0 && i + 1 < segments.len())
        .collect();
    let pool = if interior.is_empty() {
        eligible
    } else {
        interior
    };
    pool.into_iter().min_by(|&a, &b| {
        ((a as f64 - mid).abs())
            .total_cmp(&(b as f64 - mid).abs())
            .then(a.cmp(&b))
    })
}

/// Overlays `clip` centred on a segment chosen per `placement`, scaled to
/// `snr_db` over the overlap.
pub fn build_scene(
    id: impl Into<String>,
    performance: &Performance,
    clip: &[f64],
    placement: Placement,
    snr_db: f64,
    params: &TransformParams,
) -> Result<SyntheticScene> {
    let pitch_sets: Vec<Vec<u8>> = performance
        .segments
        .iter()
        .map(|(n, _)| n.clone())
        .collect();
    let idx = choose_segment(&pitch_sets, placement)
        .ok_or_else(|| Error::Scene(format!("no segment qualifies for {placement} placement")))?;
    let span = performance.segments[idx].1.clone();
    if clip.len() >= span.len() {
        return Err(Error::Scene(format!(
            "interference of {} samples does not fit a {}-sample segment",
            clip.len(),
            span.len()
        )));
    }
    let start = span.start + (span.len() - clip.len()) / 2;
    let overlap = start..start + clip.len();
    let clean = performance.signal.clone();
    let source_energy = energy(&clean[overlap.clone()]);
    let clip_energy = energy(clip);
    if source_energy == 0.0 || clip_energy == 0.0 {
        return Err(Error::Scene(
            "silent source or interference on the overlap".into(),
        ));
    }
    let gain = (source_energy / (clip_energy * 10f64.powf(snr_db / 10.0))).sqrt();

    let mut interference = vec![0.0; clean.len()];
    for (dst, v) in interference[overlap].iter_mut().zip(clip) {
        *dst = v * gain;
    }
    let first = interference.iter().position(|&v| v != 0.0).unwrap_or(start);
    let last = interference
        .iter()
        .rposition(|&v| v != 0.0)
        .map_or(first, |i| i + 1);
    let extent = first..last;
    let mixture: Vec<f64> = clean
        .iter()
        .zip(&interference)
        .map(|(s, n)| s + n)
        .collect();
    let frames = params.num_frames(clean.len());
    let support = params.frames_overlapping(extent.start, extent.end, frames);
    Ok(SyntheticScene {
        id: id.into(),
        content: performance.content,
        placement,
        clean,
        interference,
        mixture,
        extent,
        support,
        params: params.clone(),
    })
}

/// Energy-ratio SDR over `range`, capped at [`SDR_CEILING_DB`].
pub fn sdr(reference: &[f64], estimate: &[f64], range: Range<usize>) -> Result<f64> {
    if reference.len() != estimate.len() {
        return Err(Error::DimensionMismatch(format!(
            "reference has {} samples, estimate {}",
            reference.len(),
            estimate.len()
        )));
    }
    if range.end > reference.len() {
        return Err(Error::DimensionMismatch(format!(
            "segment ends at {} beyond {} samples",
            range.end,
            reference.len()
        )));
    }
    let r = &reference[range.clone()];
    let e = &estimate[range];
    let signal = energy(r);
    if signal == 0.0 {
        return Err(Error::SilentReference);
    }
    let error: f64 = r.iter().zip(e).map(|(a, b)| (a - b) * (a - b)).sum();
    if error < 1e-20 * signal {
        return Ok(SDR_CEILING_DB);
    }
    Ok((10.0 * (signal / error).log10()).min(SDR_CEILING_DB))
}

/// SDR gain of `estimate` over the unprocessed `mixture`.
pub fn nsdr(
    reference: &[f64],
    mixture: &[f64],
    estimate: &[f64],
    range: Range<usize>,
) -> Result<f64> {
    Ok(sdr(reference, estimate, range.clone())? - sdr(reference, mixture, range)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub scene_id: String,
    pub content: Content,
    pub placement: Placement,
    pub variant: Variant,
    #[serde(rename = "sdr_mix")]
    pub sdr_mixture: f64,
    #[serde(rename = "sdr_est")]
    pub sdr_estimate: f64,
    pub nsdr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridConfig {
    /// Requested neighbour count; each scene uses `min(k, pool / 2)`.
    pub k: usize,
    pub max_shift: usize,
    /// Pruning surplus; `None` means twice the effective K.
    pub pruning: Option<usize>,
    pub drop_head: usize,
    pub snr_db: f64,
    pub seed: u64,
    pub params: TransformParams,
    pub melody_seconds: f64,
    pub chord_seconds: f64,
    /// Clip length as a fraction of the segment it overlays.
    pub clip_fraction: f64,
    pub timbres: Vec<Timbre>,
    pub interferences: Vec<InterferenceKind>,
    /// Recorded clips overlaid in addition to the synthetic kinds; each is
    /// cut to the same length as a synthetic clip.
    #[serde(skip)]
    pub recorded: Vec<RecordedClip>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            k: 300,
            max_shift: 48,
            pruning: None,
            drop_head: 1,
            snr_db: 12.0,
            seed: 7,
            params: TransformParams::for_sample_rate(22_050),
            melody_seconds: 0.5,
            chord_seconds: 0.6,
            clip_fraction: 0.9,
            timbres: TIMBRES.to_vec(),
            interferences: InterferenceKind::ALL.to_vec(),
            recorded: Vec::new(),
        }
    }
}

impl GridConfig {
    /// Separation settings for a scene: K and P are capped so the pool of
    /// clean frames can supply them.
    pub fn separation_config(&self, scene: &SyntheticScene, variant: Variant) -> SeparationConfig {
        let frames = self.params.num_frames(scene.mixture.len());
        let pool = frames - scene.support.len();
        let k = self.k.min(pool / 2).max(1);
        let pruning = self.pruning.unwrap_or(2 * k).min(pool - k);
        SeparationConfig {
            k,
            max_shift: self.max_shift,
            pruning,
            variant,
            support: scene.support.iter().copied().collect(),
            drop_head: self.drop_head,
            clamp_shift: true,
        }
    }
}

/// Desk-scale corpus: every (passage, timbre, interference, placement)
/// combination drawn from `contents`.
pub fn desk_scale_scenes(config: &GridConfig, contents: &[Content]) -> Result<Vec<SyntheticScene>> {
    #[derive(Clone, Copy)]
    enum Clip {
        Synthetic(InterferenceKind),
        Recorded(usize),
    }
    let sr = config.params.sample_rate;
    let clips: Vec<Clip> = config
        .interferences
        .iter()
        .map(|&k| Clip::Synthetic(k))
        .chain((0..config.recorded.len()).map(Clip::Recorded))
        .collect();
    let mut jobs = Vec::new();
    for &content in contents {
        let (passages, seconds) = match content {
            Content::Melody => (melodies(), config.melody_seconds),
            Content::Chords => (chord_progressions(), config.chord_seconds),
        };
        for (p, passage) in passages.into_iter().enumerate() {
            for timbre in &config.timbres {
                for &clip in &clips {
                    for placement in [Placement::Repeated, Placement::NotRepeated] {
                        jobs.push((
                            content,
                            p,
                            passage.clone(),
                            seconds,
                            *timbre,
                            clip,
                            placement,
                        ));
                    }
                }
            }
        }
    }
    jobs.into_par_iter()
        .enumerate()
        .map(
            |(i, (content, p, passage, seconds, timbre, clip, placement))| {
                let perf = render(&passage, seconds, &timbre, content, sr)?;
                let duration = seconds * config.clip_fraction;
                let (name, samples) = match clip {
                    Clip::Synthetic(kind) => {
                        let mut rng = ChaCha8Rng::seed_from_u64(
                            config.seed.wrapping_mul(1_000_003).wrapping_add(i as u64),
                        );
                        (
                            kind.as_str().to_string(),
                            interference_clip(kind, duration, sr, &mut rng),
                        )
                    }
                    Clip::Recorded(r) => {
                        let rec = &config.recorded[r];
                        let len = ((duration * sr as f64).round() as usize).min(rec.samples.len());
                        (rec.name.clone(), rec.samples[..len].to_vec())
                    }
                };
                let id = format!("{content}{p}-{}-{name}-{placement}", timbre.name);
                build_scene(
                    id,
                    &perf,
                    &samples,
                    placement,
                    config.snr_db,
                    &config.params,
                )
            },
        )
        .collect()
}

/// Separates one scene with one variant and scores it.
pub fn evaluate_scene(
    scene: &SyntheticScene,
    variant: Variant,
    config: &GridConfig,
) -> Result<EvalResult> {
    let spect = forward_logfreq(&scene.mixture, &config.params)?;
    evaluate_spectrogram(scene, &spect, variant, config)
}

fn evaluate_spectrogram(
    scene: &SyntheticScene,
    spect: &crate::timefreq::ComplexSpectrogram,
    variant: Variant,
    config: &GridConfig,
) -> Result<EvalResult> {
    let sep = separate(spect, &config.separation_config(scene, variant))?;
    let estimate = inverse_logfreq(&sep.source)?;
    let range = scene.eval_range();
    let sdr_mixture = sdr(&scene.clean, &scene.mixture, range.clone())?;
    let sdr_estimate = sdr(&scene.clean, &estimate, range)?;
    Ok(EvalResult {
        scene_id: scene.id.clone(),
        content: scene.content,
        placement: scene.placement,
        variant,
        sdr_mixture,
        sdr_estimate,
        nsdr: sdr_estimate - sdr_mixture,
    })
}

/// One result per (scene, variant), ordered by scene then variant.
pub fn run_grid(
    scenes: &[SyntheticScene],
    variants: &[Variant],
    config: &GridConfig,
) -> Result<Vec<EvalResult>> {
    let rows: Vec<Vec<EvalResult>> = scenes
        .par_iter()
        .map(|scene| {
            let spect = forward_logfreq(&scene.mixture, &config.params)?;
            variants
                .iter()
                .map(|&v| evaluate_spectrogram(scene, &spect, v, config))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn write_csv<W: Write>(results: &[EvalResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scene_id",
        "content",
        "placement",
        "variant",
        "sdr_mix",
        "sdr_est",
        "nsdr",
    ])?;
    for r in results {
        w.write_record([
            r.scene_id.clone(),
            r.content.to_string(),
            r.placement.to_string(),
            r.variant.to_string(),
            format!("{:.4}", r.sdr_mixture),
            format!("{:.4}", r.sdr_estimate),
            format!("{:.4}", r.nsdr),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean NSDR per method and (content, placement) condition.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTable {
    pub cells: BTreeMap<(Variant, Content, Placement), (f64, usize)>,
}

impl SummaryTable {
    pub fn from_results(results: &[EvalResult]) -> Self {
        let mut sums: BTreeMap<(Variant, Content, Placement), (f64, usize)> = BTreeMap::new();
        for r in results {
            let e = sums.entry((r.variant, r.content, r.placement)).or_default();
            e.0 += r.nsdr;
            e.1 += 1;
        }
        let cells = sums
            .into_iter()
            .map(|(k, (s, n))| (k, (s / n as f64, n)))
            .collect();
        Self { cells }
    }

    pub fn mean(&self, variant: Variant, content: Content, placement: Placement) -> Option<f64> {
        self.cells.get(&(variant, content, placement)).map(|c| c.0)
    }

    pub fn variants(&self) -> Vec<Variant> {
        let mut v: Vec<Variant> = self.cells.keys().map(|k| k.0).collect();
        v.dedup();
        v
    }

    pub fn conditions(&self) -> Vec<(Content, Placement)> {
        let mut c: Vec<(Content, Placement)> = self.cells.keys().map(|k| (k.1, k.2)).collect();
        c.sort();
        c.dedup();
        c
    }
}

impl fmt::Display for SummaryTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let conditions = [
            (Content::Melody, Placement::Repeated),
            (Content::Melody, Placement::NotRepeated),
            (Content::Chords, Placement::Repeated),
            (Content::Chords, Placement::NotRepeated),
        ];
        writeln!(f, "Mean NSDR (dB)")?;
        writeln!(f, "{:<17}{:^28}{:^28}", "", "Melody", "Chords")?;
        writeln!(
            f,
            "{:<17}{:>14}{:>14}{:>14}{:>14}",
            "", "Repeated", "Not repeated", "Repeated", "Not repeated"
        )?;
        for v in self.variants() {
            write!(f, "{:<17}", v.as_str())?;
            for (c, p) in conditions {
                match self.mean(v, c, p) {
                    Some(m) => write!(f, "{m:>14.2}")?,
                    None => write!(f, "{:>14}", "-")?,
                }
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
