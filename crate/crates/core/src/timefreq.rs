//! Log-frequency analysis and resynthesis.
//!
//! Frames are analysed with a zero-phase Hann-windowed FFT and the linear
//! bins are then projected onto a geometric frequency axis with a fixed
//! sparse mapping. Below the frequency where log spacing drops under the
//! linear bin spacing the mapping is band-limited (Lanczos) interpolation of
//! the frame spectrum; above it, each log bin pools the linear bins under a
//! triangular response normalized to unit gain for an on-centre sinusoid.
//! Either way a partial keeps the same magnitude wherever it lands, so a
//! pitch transposition becomes a translation along the bin axis.
//!
//! The linear-grid coefficients are carried alongside the log coefficients.
//! Masks are mapped back onto the linear grid by interpolating along the log
//! axis, and resynthesis runs a weighted overlap-add inverse STFT. A
//! spectrogram is therefore always invertible exactly, masked or not.

use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-width, in linear bins, of the Lanczos interpolation kernel.
const LANCZOS_TAPS: i64 = 8;

/// Default analysis window duration; the length in samples is the nearest
/// power of two.
const WINDOW_SECONDS: f64 = 0.186;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformParams {
    pub sample_rate: u32,
    pub bins_per_octave: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub hop: usize,
    /// Analysis window length in samples. The window is fixed across bins.
    pub window_length: usize,
    /// Bandwidth offset of a constant-Q filterbank. Recorded only; the fixed
    /// window policy does not use it.
    pub gamma: f64,
}

impl Default for TransformParams {
    fn default() -> Self {
        Self::for_sample_rate(44_100)
    }
}

impl TransformParams {
    /// Defaults at the given sample rate: 24 bins/octave from 27.5 Hz up to
    /// Nyquist, a window of about 186 ms (4096 samples at 22.05 kHz, 8192 at
    /// 44.1 kHz) and hop 512.
    ///
    /// The window is fixed in seconds rather than samples because its main
    /// lobe sets how far low partials smear across log bins, which is what
    /// breaks the pitch-shift-as-translation property at low frequencies.
    pub fn for_sample_rate(sample_rate: u32) -> Self {
        let window_length =
            ((WINDOW_SECONDS * sample_rate as f64).log2().round().exp2() as usize).max(4);
        Self {
            sample_rate,
            bins_per_octave: 24,
            f_min: 27.5,
            f_max: sample_rate as f64 / 2.0,
            hop: 512.min(window_length / 2),
            window_length,
            gamma: 20.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.sample_rate == 0 {
            return Err(Error::InvalidParams("sample rate must be positive".into()));
        }
        if !(self.f_min > 0.0) {
            return Err(Error::InvalidParams(format!(
                "f_min {} must be > 0",
                self.f_min
            )));
        }
        if !(self.f_max > self.f_min) || self.f_max > nyquist {
            return Err(Error::InvalidParams(format!(
                "f_max {} must lie in (f_min, {nyquist}]",
                self.f_max
            )));
        }
        if self.bins_per_octave == 0 {
            return Err(Error::InvalidParams("bins_per_octave must be >= 1".into()));
        }
        if self.window_length < 4 || !self.window_length.is_multiple_of(2) {
            return Err(Error::InvalidParams(format!(
                "window length {} must be even and >= 4",
                self.window_length
            )));
        }
        if self.hop == 0 || self.hop > self.window_length / 2 {
            return Err(Error::InvalidParams(format!(
                "hop {} must be in 1..={}",
                self.hop,
                self.window_length / 2
            )));
        }
        Ok(())
    }

    /// Number of log-frequency bins, `ceil(bpo * log2(f_max / f_min))`.
    pub fn num_bins(&self) -> usize {
        (self.bins_per_octave as f64 * (self.f_max / self.f_min).log2()).ceil() as usize
    }

    /// Centre frequency of log bin `bin`.
    pub fn bin_frequency(&self, bin: usize) -> f64 {
        self.f_min * 2f64.powf(bin as f64 / self.bins_per_octave as f64)
    }

    /// Number of frames produced for a signal of `len` samples. Frame `t` is
    /// centred on sample `t * hop`.
    pub fn num_frames(&self, len: usize) -> usize {
        len / self.hop + 1
    }

    pub fn frame_time(&self, frame: usize) -> f64 {
        (frame * self.hop) as f64 / self.sample_rate as f64
    }

    fn linear_bins(&self) -> usize {
        self.window_length / 2 + 1
    }

    /// Frames whose analysis window overlaps the sample interval
    /// `[start, end)`, including partial overlaps.
    pub fn frames_overlapping(&self, start: usize, end: usize, num_frames: usize) -> Vec<usize> {
        if end <= start {
            return Vec::new();
        }
        let half = (self.window_length / 2) as i64;
        (0..num_frames)
            .filter(|&t| {
                let centre = (t * self.hop) as i64;
                // The Hann window is zero at its first sample, so the open
                // interval (centre - half, centre + half) is what contributes.
                centre - half + 1 < end as i64 && centre + half > start as i64
            })
            .collect()
    }

    /// Sample interval owned by the given frames (each frame owns
    /// `hop` samples around its centre), clipped to `len`.
    pub fn frames_to_samples(&self, frames: &[usize], len: usize) -> std::ops::Range<usize> {
        let (Some(&first), Some(&last)) = (frames.iter().min(), frames.iter().max()) else {
            return 0..0;
        };
        let half = self.hop / 2;
        let start = (first * self.hop).saturating_sub(half).min(len);
        let end = (last * self.hop + self.hop - half).min(len);
        start..end
    }
}

#[derive(Debug, Clone, Copy)]
struct Tap {
    bin: usize,
    weight: f64,
    conjugate: bool,
}

#[derive(Debug, Clone, Copy)]
struct BackTap {
    lo: usize,
    hi: usize,
    frac: f64,
}

/// Sparse linear map from the linear STFT grid onto the log axis, and the
/// interpolation that carries log-domain masks back.
#[derive(Debug)]
pub struct LogFreqMap {
    bins: usize,
    linear_bins: usize,
    forward: Vec<Vec<Tap>>,
    back: Vec<BackTap>,
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Hann window transform normalized to 1 at the origin; `x` in bins.
fn hann_kernel(x: f64) -> f64 {
    let d = 1.0 - x * x;
    if d.abs() < 1e-9 {
        0.5
    } else {
        sinc(x) / d
    }
}

impl LogFreqMap {
    pub fn new(params: &TransformParams) -> Result<Self> {
        params.validate()?;
        let bins = params.num_bins();
        let linear_bins = params.linear_bins();
        let nyquist_bin = (linear_bins - 1) as i64;
        let df = params.sample_rate as f64 / params.window_length as f64;
        let ratio = 2f64.powf(1.0 / params.bins_per_octave as f64) - 1.0;

        let forward = (0..bins)
            .map(|f| {
                let centre = params.bin_frequency(f);
                let spacing = centre * ratio;
                let pos = centre / df;
                if spacing <= df {
                    let base = pos.floor() as i64;
                    ((base - LANCZOS_TAPS + 1)..=(base + LANCZOS_TAPS))
                        .map(|k| {
                            let x = pos - k as f64;
                            let weight = sinc(x) * sinc(x / LANCZOS_TAPS as f64);
                            // Real-input symmetry: mirror taps across DC and Nyquist.
                            let (bin, conjugate) = if k < 0 {
                                (-k, true)
                            } else if k > nyquist_bin {
                                (2 * nyquist_bin - k, true)
                            } else {
                                (k, false)
                            };
                            Tap {
                                bin: bin as usize,
                                weight,
                                conjugate,
                            }
                        })
                        .collect()
                } else {
                    let half_width = spacing / df;
                    let lo = (pos - half_width).ceil().max(0.0) as usize;
                    let hi = ((pos + half_width).floor() as usize).min(linear_bins - 1);
                    let mut taps: Vec<Tap> = (lo..=hi)
                        .map(|k| Tap {
                            bin: k,
                            weight: (1.0 - (k as f64 - pos).abs() / half_width).max(0.0),
                            conjugate: false,
                        })
                        .filter(|t| t.weight > 0.0)
                        .collect();
                    let gain: f64 = taps
                        .iter()
                        .map(|t| t.weight * hann_kernel(t.bin as f64 - pos))
                        .sum();
                    for t in &mut taps {
                        t.weight /= gain;
                    }
                    taps
                }
            })
            .collect();

        let back = (0..linear_bins)
            .map(|k| {
                let freq = k as f64 * df;
                let pos = if freq <= params.f_min {
                    0.0
                } else {
                    (params.bins_per_octave as f64 * (freq / params.f_min).log2())
                        .min((bins - 1) as f64)
                };
                let lo = pos.floor() as usize;
                let hi = (lo + 1).min(bins - 1);
                BackTap {
                    lo,
                    hi,
                    frac: pos - lo as f64,
                }
            })
            .collect();

        Ok(Self {
            bins,
            linear_bins,
            forward,
            back,
        })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    fn project(&self, linear: &[Complex64], out: &mut [Complex64]) {
        for (o, taps) in out.iter_mut().zip(&self.forward) {
            *o = taps.iter().fold(Complex64::new(0.0, 0.0), |acc, t| {
                let v = linear[t.bin];
                acc + if t.conjugate { v.conj() } else { v } * t.weight
            });
        }
    }

    /// Interpolates a log-domain mask column onto the linear grid. A constant
    /// column maps to exactly the same constant.
    fn back_map(&self, mask: &[f64], out: &mut [f64]) {
        for (o, b) in out.iter_mut().zip(&self.back) {
            let lo = mask[b.lo];
            *o = lo + b.frac * (mask[b.hi] - lo);
        }
    }
}

fn periodic_hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Nonnegative real F x T matrix stored frame by frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MagSpectrogram {
    bins: usize,
    frames: usize,
    data: Vec<f64>,
}

impl MagSpectrogram {
    pub fn zeros(bins: usize, frames: usize) -> Self {
        Self {
            bins,
            frames,
            data: vec![0.0; bins * frames],
        }
    }

    /// Builds from frame-major data (`data[t * bins + f]`).
    pub fn from_frames(bins: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != bins * frames {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {bins}x{frames} spectrogram",
                data.len()
            )));
        }
        if let Some((i, &v)) = data.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(Error::NegativeMagnitude {
                bin: i % bins.max(1),
                frame: i / bins.max(1),
                value: v,
            });
        }
        Ok(Self { bins, frames, data })
    }

    /// Builds from a list of equally long columns.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let bins = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != bins) {
            return Err(Error::DimensionMismatch("columns differ in length".into()));
        }
        Self::from_frames(bins, columns.len(), columns.concat())
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.data[frame * self.bins + bin]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn frame_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor >= 0.0, "magnitudes can only be scaled by c >= 0");
        Self {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..*self
        }
    }

    /// Elementwise mean of several equally shaped spectrograms.
    pub fn mean(parts: &[MagSpectrogram]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::DimensionMismatch("no spectrograms".into()))?;
        if parts
            .iter()
            .any(|p| p.bins != first.bins || p.frames != first.frames)
        {
            return Err(Error::DimensionMismatch(
                "channel spectrograms differ in shape".into(),
            ));
        }
        let n = parts.len() as f64;
        let data = (0..first.data.len())
            .map(|i| parts.iter().map(|p| p.data[i]).sum::<f64>() / n)
            .collect();
        Ok(Self { data, ..*first })
    }
}

/// Real F x T mask with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftMask {
    bins: usize,
    frames: usize,
    data: Vec<f64>,
}

impl SoftMask {
    pub fn filled(bins: usize, frames: usize, value: f64) -> Result<Self> {
        Self::from_frames(bins, frames, vec![value; bins * frames])
    }

    pub fn from_frames(bins: usize, frames: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != bins * frames {
            return Err(Error::DimensionMismatch(format!(
                "{} mask values for a {bins}x{frames} spectrogram",
                data.len()
            )));
        }
        if let Some((i, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::MaskOutOfRange {
                bin: i % bins,
                frame: i / bins,
                value,
            });
        }
        Ok(Self { bins, frames, data })
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.bins..(t + 1) * self.bins]
    }

    pub fn get(&self, bin: usize, frame: usize) -> f64 {
        self.data[frame * self.bins + bin]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Complex log-frequency spectrogram together with the linear-grid STFT it
/// was projected from.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    params: TransformParams,
    map: Arc<LogFreqMap>,
    frames: usize,
    signal_len: usize,
    data: Vec<Complex64>,
    linear: Vec<Complex64>,
}

impl ComplexSpectrogram {
    pub fn params(&self) -> &TransformParams {
        &self.params
    }

    pub fn bins(&self) -> usize {
        self.map.bins
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn signal_len(&self) -> usize {
        self.signal_len
    }

    /// Log-frequency coefficients, frame-major.
    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    /// Linear-frequency STFT coefficients, frame-major.
    pub fn linear(&self) -> &[Complex64] {
        &self.linear
    }

    pub fn linear_bins(&self) -> usize {
        self.map.linear_bins
    }

    pub fn frame(&self, t: usize) -> &[Complex64] {
        let f = self.bins();
        &self.data[t * f..(t + 1) * f]
    }

    pub fn get(&self, bin: usize, frame: usize) -> Complex64 {
        self.data[frame * self.bins() + bin]
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.frames)
            .map(|t| self.params.frame_time(t))
            .collect()
    }

    /// Same geometry, all coefficients zero.
    pub fn zeros_like(&self) -> Self {
        Self {
            data: vec![Complex64::new(0.0, 0.0); self.data.len()],
            linear: vec![Complex64::new(0.0, 0.0); self.linear.len()],
            ..self.clone()
        }
    }

    /// Multiplies every coefficient by `factor`, in both grids.
    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * factor).collect(),
            linear: self.linear.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    fn check_mask(&self, mask: &SoftMask) -> Result<()> {
        if mask.bins != self.bins() || mask.frames != self.frames {
            return Err(Error::DimensionMismatch(format!(
                "mask is {}x{}, spectrogram is {}x{}",
                mask.bins,
                mask.frames,
                self.bins(),
                self.frames
            )));
        }
        Ok(())
    }

    /// Elementwise masking, applied to the log coefficients directly and to
    /// the linear grid through the back-mapped mask.
    pub fn apply_mask(&self, mask: &SoftMask) -> Result<Self> {
        Ok(self.split(mask)?.0)
    }

    /// Splits into `(mask * X, X - mask * X)`. The two parts sum back to the
    /// original in both grids.
    pub fn split(&self, mask: &SoftMask) -> Result<(Self, Self)> {
        self.check_mask(mask)?;
        let bins = self.bins();
        let lin = self.map.linear_bins;

        let data_src: Vec<Complex64> = self
            .data
            .iter()
            .zip(&mask.data)
            .map(|(x, m)| x * *m)
            .collect();
        let data_rest = self
            .data
            .iter()
            .zip(&data_src)
            .map(|(x, s)| x - s)
            .collect();

        let mut linear_src = vec![Complex64::new(0.0, 0.0); self.linear.len()];
        linear_src
            .par_chunks_mut(lin)
            .zip(self.linear.par_chunks(lin))
            .zip(mask.data.par_chunks(bins))
            .for_each_init(
                || vec![0.0; lin],
                |gain, ((out, x), m)| {
                    self.map.back_map(m, gain);
                    for ((o, x), g) in out.iter_mut().zip(x).zip(gain.iter()) {
                        *o = x * *g;
                    }
                },
            );
        let linear_rest = self
            .linear
            .iter()
            .zip(&linear_src)
            .map(|(x, s)| x - s)
            .collect();

        let src = Self {
            data: data_src,
            linear: linear_src,
            ..self.clone()
        };
        let rest = Self {
            data: data_rest,
            linear: linear_rest,
            ..self.clone()
        };
        Ok((src, rest))
    }
}

/// Analyses a mono signal into a log-frequency spectrogram.
pub fn forward_logfreq(signal: &[f64], params: &TransformParams) -> Result<ComplexSpectrogram> {
    params.validate()?;
    let window_len = params.window_length;
    if signal.len() < window_len {
        return Err(Error::SignalTooShort {
            len: signal.len(),
            window: window_len,
        });
    }
    let map = Arc::new(LogFreqMap::new(params)?);
    let frames = params.num_frames(signal.len());
    let lin = params.linear_bins();
    let bins = map.bins;
    let half = window_len / 2;
    let window = periodic_hann(window_len);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(window_len);

    let mut linear = vec![Complex64::new(0.0, 0.0); frames * lin];
    linear.par_chunks_mut(lin).enumerate().for_each_init(
        || vec![Complex64::new(0.0, 0.0); window_len],
        |buf, (t, out)| {
            let start = (t * params.hop) as i64 - half as i64;
            // Rotate by half a window so the window centre sits at index 0.
            for (n, w) in window.iter().enumerate() {
                let idx = start + n as i64;
                let x = if idx >= 0 && (idx as usize) < signal.len() {
                    signal[idx as usize]
                } else {
                    0.0
                };
                buf[(n + half) % window_len] = Complex64::new(x * w, 0.0);
            }
            fft.process(buf);
            out.copy_from_slice(&buf[..lin]);
        },
    );

    let mut data = vec![Complex64::new(0.0, 0.0); frames * bins];
    data.par_chunks_mut(bins)
        .zip(linear.par_chunks(lin))
        .for_each(|(out, x)| map.project(x, out));

    Ok(ComplexSpectrogram {
        params: params.clone(),
        map,
        frames,
        signal_len: signal.len(),
        data,
        linear,
    })
}

/// Resynthesizes a signal by weighted overlap-add.
pub fn inverse_logfreq(spect: &ComplexSpectrogram) -> Result<Vec<f64>> {
    let params = &spect.params;
    let window_len = params.window_length;
    let lin = params.linear_bins();
    if spect.linear.len() != spect.frames * lin || spect.data.len() != spect.frames * spect.bins() {
        return Err(Error::DimensionMismatch(
            "spectrogram storage does not match its parameters".into(),
        ));
    }
    let half = window_len / 2;
    let window = periodic_hann(window_len);
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(window_len);

    let frames: Vec<Vec<f64>> = spect
        .linear
        .par_chunks(lin)
        .map_init(
            || vec![Complex64::new(0.0, 0.0); window_len],
            |buf, x| {
                buf[..lin].copy_from_slice(x);
                for k in 1..half {
                    buf[window_len - k] = x[k].conj();
                }
                buf[0].im = 0.0;
                buf[half].im = 0.0;
                ifft.process(buf);
                (0..window_len)
                    .map(|n| buf[(n + half) % window_len].re / window_len as f64 * window[n])
                    .collect()
            },
        )
        .collect();

    let len = spect.signal_len;
    let mut out = vec![0.0; len];
    let mut norm = vec![0.0; len];
    for (t, frame) in frames.iter().enumerate() {
        let start = (t * params.hop) as i64 - half as i64;
        for (n, (v, w)) in frame.iter().zip(&window).enumerate() {
            let idx = start + n as i64;
            if idx >= 0 && (idx as usize) < len {
                out[idx as usize] += v;
                norm[idx as usize] += w * w;
            }
        }
    }
    for (o, n) in out.iter_mut().zip(&norm) {
        *o = if *n > 1e-12 { *o / n } else { 0.0 };
    }
    Ok(out)
}

pub fn magnitude(spect: &ComplexSpectrogram) -> MagSpectrogram {
    MagSpectrogram {
        bins: spect.bins(),
        frames: spect.frames,
        data: spect.data.iter().map(|z| z.norm()).collect(),
    }
}

pub fn apply_mask_and_resynthesize(
    spect: &ComplexSpectrogram,
    mask: &SoftMask,
) -> Result<Vec<f64>> {
    inverse_logfreq(&spect.apply_mask(mask)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, secs: f64, sr: u32) -> Vec<f64> {
        let n = (secs * sr as f64) as usize;
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / sr as f64).sin())
            .collect()
    }

    fn argmax(v: &[f64]) -> usize {
        v.iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .unwrap()
    }

    fn interior_argmax(mag: &MagSpectrogram) -> Vec<usize> {
        let t = mag.frames();
        (t / 4..3 * t / 4).map(|i| argmax(mag.frame(i))).collect()
    }

    #[test]
    fn bin_count_matches_axis_definition() {
        let p = TransformParams::default();
        assert_eq!(
            p.num_bins(),
            (24.0 * (22050.0f64 / 27.5).log2()).ceil() as usize
        );
        assert!((p.bin_frequency(24) - 55.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_invalid_params() {
        let mut p = TransformParams::default();
        p.f_max = 30_000.0;
        assert!(matches!(p.validate(), Err(Error::InvalidParams(_))));
        let mut p = TransformParams::default();
        p.f_min = 0.0;
        assert!(p.validate().is_err());
        let mut p = TransformParams::default();
        p.bins_per_octave = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn short_signal_is_rejected() {
        let p = TransformParams::default();
        let err = forward_logfreq(&vec![0.0; 100], &p).unwrap_err();
        assert!(matches!(err, Error::SignalTooShort { len: 100, .. }));
    }

    #[test]
    fn lowest_bin_tone_peaks_at_bin_zero() {
        let p = TransformParams::default();
        let mag = magnitude(&forward_logfreq(&sine(27.5, 1.0, 44_100), &p).unwrap());
        for bin in interior_argmax(&mag) {
            assert!(bin <= 1, "argmax {bin}");
        }
    }

    #[test]
    fn octave_tone_peaks_one_octave_up() {
        let p = TransformParams::default();
        let mag = magnitude(&forward_logfreq(&sine(55.0, 1.0, 44_100), &p).unwrap());
        for bin in interior_argmax(&mag) {
            assert!((23..=25).contains(&bin), "argmax {bin}");
        }
    }

    #[test]
    fn silence_maps_to_zero_both_ways() {
        let p = TransformParams::default();
        let spect = forward_logfreq(&vec![0.0; 8192], &p).unwrap();
        assert!(spect.data().iter().all(|z| z.norm() == 0.0));
        assert!(inverse_logfreq(&spect).unwrap().iter().all(|&x| x == 0.0));
        let x = sine(440.0, 0.5, 44_100);
        let zero = forward_logfreq(&x, &p).unwrap().zeros_like();
        assert!(inverse_logfreq(&zero).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn magnitude_of_three_four_is_five() {
        let p = TransformParams::default();
        let x = sine(440.0, 0.2, 44_100);
        let mut spect = forward_logfreq(&x, &p).unwrap();
        spect.data[0] = Complex64::new(3.0, 4.0);
        assert_eq!(magnitude(&spect).get(0, 0), 5.0);
    }

    #[test]
    fn magnitude_ignores_global_phase() {
        let p = TransformParams::default();
        let spect = forward_logfreq(&sine(330.0, 0.3, 44_100), &p).unwrap();
        let rotated = spect.scaled(Complex64::from_polar(1.0, 1.234));
        let a = magnitude(&spect);
        let b = magnitude(&rotated);
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= 1e-12 * x.max(1.0));
        }
    }

    #[test]
    fn mask_edge_cases() {
        let p = TransformParams::default();
        let x = sine(440.0, 0.5, 44_100);
        let spect = forward_logfreq(&x, &p).unwrap();
        let (f, t) = (spect.bins(), spect.frames());
        let ones = SoftMask::filled(f, t, 1.0).unwrap();
        assert_eq!(
            apply_mask_and_resynthesize(&spect, &ones).unwrap(),
            inverse_logfreq(&spect).unwrap()
        );
        let zeros = SoftMask::filled(f, t, 0.0).unwrap();
        assert!(apply_mask_and_resynthesize(&spect, &zeros)
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));

        assert!(matches!(
            SoftMask::filled(f, t, 1.5),
            Err(Error::MaskOutOfRange { .. })
        ));
        let wrong = SoftMask::filled(f + 1, t, 0.5).unwrap();
        assert!(matches!(
            spect.apply_mask(&wrong),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn overlapping_frames_include_partial_overlap() {
        let p = TransformParams::for_sample_rate(22_050);
        // Window spans (t*512 - 2048, t*512 + 2048).
        let frames = p.frames_overlapping(10_000, 10_001, 100);
        assert_eq!(frames.first(), Some(&16));
        assert_eq!(frames.last(), Some(&23));
        assert!(p.frames_overlapping(5, 5, 100).is_empty());
    }
}
