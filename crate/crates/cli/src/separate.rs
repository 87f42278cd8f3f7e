use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::Args;
use serde::Serialize;

use sikam_core::eval::nsdr;
use sikam_core::kam::{neighbor_sets, separate_with_neighbors};
use sikam_core::wav::{read_wav, write_wav, Audio};
use sikam_core::{
    forward_logfreq, inverse_logfreq, magnitude, MagSpectrogram, NeighborSet, SeparationConfig,
    TransformParams, Variant,
};

use crate::failure::{usage, CoreContext, Kind, Outcome, Tag};
use crate::manifest::Manifest;
use crate::write_json;

const KEYS: &[&str] = &[
    "input",
    "output_dir",
    "variant",
    "k",
    "delta",
    "p",
    "support",
    "seed",
    "drop_head",
    "clamp_shift",
    "reference",
    "bins_per_octave",
    "f_min",
    "f_max",
    "hop",
    "window_length",
];

#[derive(Debug, Args)]
pub struct SeparateArgs {
    /// Mixture WAV (16-bit or 32-bit float PCM, mono or stereo).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Directory for source.wav, interference.wav, report.json and timings.json.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Kernel: baseline, shift, specmurt or specmurt-pruned.
    #[arg(long)]
    variant: Option<Variant>,
    /// Neighbour count K.
    #[arg(long)]
    k: Option<usize>,
    /// Largest frequency shift in bins.
    #[arg(long)]
    delta: Option<usize>,
    /// Pruning surplus P (defaults to 2K, capped by the candidate pool).
    #[arg(long)]
    p: Option<usize>,
    /// Interfered time ranges in seconds, `start:end[,start:end...]`.
    #[arg(long)]
    support: Option<String>,
    /// Recorded in the report; separation itself is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    /// Leading specmurt coefficients to ignore.
    #[arg(long)]
    drop_head: Option<usize>,
    /// Accept deconvolution shifts beyond --delta.
    #[arg(long)]
    no_clamp: bool,
    /// Clean reference WAV; when given, NSDR over the support is reported.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Manifest of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Parses `start:end[,start:end...]` (seconds). An empty string or `none`
/// means no support.
pub fn parse_support(spec: &str) -> anyhow::Result<Vec<(f64, f64)>> {
    let spec = spec.trim();
    if spec.is_empty() || spec.eq_ignore_ascii_case("none") {
        return Ok(Vec::new());
    }
    spec.split(',')
        .map(|part| {
            let (a, b) = part
                .split_once(':')
                .ok_or_else(|| anyhow::anyhow!("support range `{part}` is not `start:end`"))?;
            let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
            if !(a >= 0.0 && b > a) {
                anyhow::bail!("support range `{part}` must satisfy 0 <= start < end");
            }
            Ok((a, b))
        })
        .collect()
}

/// Frames overlapping any of the ranges, checked against the signal length.
pub fn support_frames(
    ranges: &[(f64, f64)],
    params: &TransformParams,
    len: usize,
) -> anyhow::Result<BTreeSet<usize>> {
    let sr = params.sample_rate as f64;
    let duration = len as f64 / sr;
    let frames = params.num_frames(len);
    let mut out = BTreeSet::new();
    for &(a, b) in ranges {
        if b > duration + 0.5 / sr {
            anyhow::bail!("support range {a}:{b} s ends after the input ({duration:.3} s)");
        }
        let (start, end) = (
            (a * sr).round() as usize,
            ((b * sr).round() as usize).min(len),
        );
        out.extend(params.frames_overlapping(start, end, frames));
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct InputInfo {
    path: String,
    sample_rate: u32,
    channels: usize,
    samples: usize,
}

#[derive(Debug, Serialize)]
struct ConfigInfo {
    variant: Variant,
    k: usize,
    max_shift: usize,
    pruning: usize,
    drop_head: usize,
    clamp_shift: bool,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct SupportInfo {
    seconds: Vec<(f64, f64)>,
    frames: Vec<usize>,
    candidate_pool: usize,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct NeighborStats {
    pub targets: usize,
    pub per_target: usize,
    pub mean_distance: f64,
    pub max_distance: f64,
    pub shifted_fraction: f64,
    pub mean_abs_shift: f64,
    pub max_abs_shift: u32,
    pub shift_histogram: BTreeMap<i32, usize>,
}

pub fn neighbor_stats(sets: &[NeighborSet]) -> NeighborStats {
    let all: Vec<_> = sets.iter().flat_map(|s| &s.neighbors).collect();
    let n = all.len().max(1) as f64;
    let mut shift_histogram = BTreeMap::new();
    for nb in &all {
        *shift_histogram.entry(nb.shift).or_insert(0) += 1;
    }
    NeighborStats {
        targets: sets.len(),
        per_target: sets.first().map_or(0, NeighborSet::len),
        mean_distance: all.iter().map(|nb| nb.distance).sum::<f64>() / n,
        max_distance: all.iter().map(|nb| nb.distance).fold(0.0, f64::max),
        shifted_fraction: all.iter().filter(|nb| nb.shift != 0).count() as f64 / n,
        mean_abs_shift: all
            .iter()
            .map(|nb| nb.shift.unsigned_abs() as f64)
            .sum::<f64>()
            / n,
        max_abs_shift: all
            .iter()
            .map(|nb| nb.shift.unsigned_abs())
            .max()
            .unwrap_or(0),
        shift_histogram,
    }
}

#[derive(Debug, Serialize)]
struct Report {
    input: InputInfo,
    config: ConfigInfo,
    transform: TransformParams,
    support: SupportInfo,
    neighbors: NeighborStats,
    /// Relative RMS of source + interference - input.
    reconstruction_error: f64,
    /// Per-channel NSDR in dB over the support, when a reference is given.
    nsdr: Option<Vec<f64>>,
    outputs: [&'static str; 2],
}

#[derive(Debug, Serialize)]
struct Timings {
    read_s: f64,
    analysis_s: f64,
    neighbors_s: f64,
    masking_s: f64,
    synthesis_s: f64,
    write_s: f64,
    total_s: f64,
}

fn transform_params(m: &Manifest, sample_rate: u32) -> Outcome<TransformParams> {
    let mut p = TransformParams::for_sample_rate(sample_rate);
    if let Some(v) = m.get("bins_per_octave").tag(Kind::Usage)? {
        p.bins_per_octave = v;
    }
    if let Some(v) = m.get("f_min").tag(Kind::Usage)? {
        p.f_min = v;
    }
    if let Some(v) = m.get("f_max").tag(Kind::Usage)? {
        p.f_max = v;
    }
    if let Some(v) = m.get("hop").tag(Kind::Usage)? {
        p.hop = v;
    }
    if let Some(v) = m.get("window_length").tag(Kind::Usage)? {
        p.window_length = v;
    }
    p.validate().context("transform parameters")?;
    Ok(p)
}

fn rel_rms(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let (mut err, mut sig) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        for (u, v) in x.iter().zip(y) {
            err += (u - v) * (u - v);
            sig += v * v;
        }
    }
    if sig == 0.0 {
        err.sqrt()
    } else {
        (err / sig).sqrt()
    }
}

pub fn run(args: SeparateArgs) -> Outcome<()> {
    let start = Instant::now();
    let m = match &args.config {
        Some(path) => Manifest::load(path, KEYS).tag(Kind::Usage)?,
        None => Manifest::default(),
    };
    let input: PathBuf = m
        .pick(args.input, "input")
        .tag(Kind::Usage)?
        .ok_or_else(|| usage("--input is required"))?;
    let out_dir: PathBuf = m
        .pick(args.output_dir, "output_dir")
        .tag(Kind::Usage)?
        .ok_or_else(|| usage("--output-dir is required"))?;
    let variant = m
        .pick(args.variant, "variant")
        .tag(Kind::Usage)?
        .unwrap_or(Variant::Baseline);
    let k = m
        .pick(args.k, "k")
        .tag(Kind::Usage)?
        .unwrap_or(SeparationConfig::default().k);
    let delta = m
        .pick(args.delta, "delta")
        .tag(Kind::Usage)?
        .unwrap_or(SeparationConfig::default().max_shift);
    let explicit_p: Option<usize> = m.pick(args.p, "p").tag(Kind::Usage)?;
    let seed = m.pick(args.seed, "seed").tag(Kind::Usage)?.unwrap_or(0);
    let drop_head = m
        .pick(args.drop_head, "drop_head")
        .tag(Kind::Usage)?
        .unwrap_or(1);
    let clamp_shift = !args.no_clamp
        && m.get::<bool>("clamp_shift")
            .tag(Kind::Usage)?
            .unwrap_or(true);
    let support_spec: String = m
        .pick(args.support, "support")
        .tag(Kind::Usage)?
        .unwrap_or_default();
    let ranges = parse_support(&support_spec).tag(Kind::Usage)?;
    let reference: Option<PathBuf> = m.pick(args.reference, "reference").tag(Kind::Usage)?;

    let t = Instant::now();
    let audio = read_wav(&input).context(format!("reading {}", input.display()))?;
    if audio.is_empty() {
        return Err(usage(format!("{} holds no samples", input.display())));
    }
    let reference = match reference {
        Some(path) => {
            let r = read_wav(&path).context(format!("reading {}", path.display()))?;
            if r.channels.len() != audio.channels.len() || r.len() != audio.len() {
                return Err(usage(format!(
                    "reference {} has {} channel(s) x {} samples, input has {} x {}",
                    path.display(),
                    r.channels.len(),
                    r.len(),
                    audio.channels.len(),
                    audio.len()
                )));
            }
            Some(r)
        }
        None => None,
    };
    let read_s = t.elapsed().as_secs_f64();

    let params = transform_params(&m, audio.sample_rate)?;
    let support = support_frames(&ranges, &params, audio.len()).tag(Kind::Usage)?;

    let t = Instant::now();
    let spects = audio
        .channels
        .iter()
        .map(|c| forward_logfreq(c, &params))
        .collect::<sikam_core::Result<Vec<_>>>()
        .context("analysis")?;
    let analysis_s = t.elapsed().as_secs_f64();

    let frames = spects[0].frames();
    let pool = frames - support.len();
    let pruning = match explicit_p {
        Some(p) => p,
        None => (2 * k).min(pool.saturating_sub(k)),
    };
    let config = SeparationConfig {
        k,
        max_shift: delta,
        pruning,
        variant,
        support,
        drop_head,
        clamp_shift,
    };
    config
        .validate(frames)
        .context(format!("{variant} separation of {frames} frames"))?;

    let t = Instant::now();
    let mags: Vec<MagSpectrogram> = spects.iter().map(magnitude).collect();
    let mean = MagSpectrogram::mean(&mags).context("channel mean")?;
    let nsets = neighbor_sets(&mean, &config).context("neighbour search")?;
    let neighbors_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let seps = spects
        .iter()
        .map(|s| separate_with_neighbors(s, nsets.clone()))
        .collect::<sikam_core::Result<Vec<_>>>()
        .context("masking")?;
    let masking_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let mut source = Vec::with_capacity(seps.len());
    let mut interference = Vec::with_capacity(seps.len());
    for sep in &seps {
        source.push(inverse_logfreq(&sep.source).context("synthesis")?);
        interference.push(inverse_logfreq(&sep.interference).context("synthesis")?);
    }
    let synthesis_s = t.elapsed().as_secs_f64();

    let summed: Vec<Vec<f64>> = source
        .iter()
        .zip(&interference)
        .map(|(s, n)| s.iter().zip(n).map(|(a, b)| a + b).collect())
        .collect();
    let reconstruction_error = rel_rms(&summed, &audio.channels);

    let nsdr = match (&reference, config.support.is_empty()) {
        (Some(r), false) => {
            let frames: Vec<usize> = config.support.iter().copied().collect();
            let range = params.frames_to_samples(&frames, audio.len());
            let values = r
                .channels
                .iter()
                .zip(&audio.channels)
                .zip(&source)
                .map(|((clean, mix), est)| nsdr(clean, mix, est, range.clone()))
                .collect::<sikam_core::Result<Vec<f64>>>()
                .context("NSDR")?;
            Some(values)
        }
        _ => None,
    };

    let t = Instant::now();
    std::fs::create_dir_all(&out_dir).tag(Kind::Io)?;
    let sr = audio.sample_rate;
    write_wav(
        out_dir.join("source.wav"),
        &Audio {
            sample_rate: sr,
            channels: source,
        },
    )
    .context("writing source.wav")?;
    write_wav(
        out_dir.join("interference.wav"),
        &Audio {
            sample_rate: sr,
            channels: interference,
        },
    )
    .context("writing interference.wav")?;

    let report = Report {
        input: InputInfo {
            path: input.display().to_string(),
            sample_rate: sr,
            channels: audio.channels.len(),
            samples: audio.len(),
        },
        config: ConfigInfo {
            variant,
            k,
            max_shift: delta,
            pruning,
            drop_head,
            clamp_shift,
            seed,
        },
        transform: params,
        support: SupportInfo {
            seconds: ranges,
            frames: config.support.iter().copied().collect(),
            candidate_pool: pool,
        },
        neighbors: neighbor_stats(&nsets),
        reconstruction_error,
        nsdr: nsdr.clone(),
        outputs: ["source.wav", "interference.wav"],
    };
    write_json(&out_dir.join("report.json"), &report)?;
    let write_s = t.elapsed().as_secs_f64();
    let timings = Timings {
        read_s,
        analysis_s,
        neighbors_s,
        masking_s,
        synthesis_s,
        write_s,
        total_s: start.elapsed().as_secs_f64(),
    };
    write_json(&out_dir.join("timings.json"), &timings)?;

    println!(
        "{variant}: {} support frames, K={k}, pool {pool}; reconstruction error {reconstruction_error:.2e}",
        config.support.len()
    );
    if let Some(v) = nsdr {
        let list: Vec<String> = v.iter().map(|x| format!("{x:.2}")).collect();
        println!("NSDR (dB): {}", list.join(", "));
    }
    println!("wrote {}", display_dir(&out_dir));
    Ok(())
}

fn display_dir(p: &Path) -> String {
    p.display().to_string()
}
