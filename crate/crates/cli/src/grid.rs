//! `eval`: the desk-scale repeated / not-repeated grid.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use sikam_core::eval::{
    desk_scale_scenes, run_grid, write_csv, Content, GridConfig, InterferenceKind, RecordedClip,
    SummaryTable, Timbre, TIMBRES,
};
use sikam_core::Variant;

use crate::failure::{usage, CoreContext, Kind, Outcome, Tag};
use crate::manifest::Manifest;
use crate::write_json;

const KEYS: &[&str] = &[
    "output_dir",
    "k",
    "delta",
    "p",
    "seed",
    "snr",
    "content",
    "variants",
    "timbres",
    "interferences",
    "clips",
    "drop_head",
];

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory for results.csv, summary.txt and grid.json.
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Requested K; each scene uses min(K, pool / 2).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    delta: Option<usize>,
    /// Pruning surplus; defaults to twice the effective K.
    #[arg(long)]
    p: Option<usize>,
    /// Seed for the synthetic interference clips.
    #[arg(long)]
    seed: Option<u64>,
    /// Mixing SNR in dB.
    #[arg(long)]
    snr: Option<f64>,
    /// Comma list of melody, chords.
    #[arg(long)]
    content: Option<String>,
    /// Comma list of kernels.
    #[arg(long)]
    variants: Option<String>,
    /// Comma list of saw, reed, flute, pluck.
    #[arg(long)]
    timbres: Option<String>,
    /// Comma list of cough, door_slam, chair_drag, drop.
    #[arg(long)]
    interferences: Option<String>,
    /// Recorded interference WAV at 22.05 kHz; repeatable.
    #[arg(long = "clip")]
    clips: Vec<PathBuf>,
    #[arg(long)]
    drop_head: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn list(spec: &str) -> impl Iterator<Item = &str> {
    spec.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn parse_content(spec: &str) -> Outcome<Vec<Content>> {
    list(spec)
        .map(|s| match s {
            "melody" => Ok(Content::Melody),
            "chords" => Ok(Content::Chords),
            other => Err(usage(format!("unknown content `{other}` (melody, chords)"))),
        })
        .collect()
}

fn parse_variants(spec: &str) -> Outcome<Vec<Variant>> {
    list(spec)
        .map(|s| s.parse::<Variant>().map_err(usage))
        .collect()
}

fn parse_timbres(spec: &str) -> Outcome<Vec<Timbre>> {
    list(spec)
        .map(|s| {
            TIMBRES
                .iter()
                .find(|t| t.name == s)
                .copied()
                .ok_or_else(|| usage(format!("unknown timbre `{s}`")))
        })
        .collect()
}

fn parse_interferences(spec: &str) -> Outcome<Vec<InterferenceKind>> {
    list(spec)
        .map(|s| {
            InterferenceKind::ALL
                .iter()
                .find(|k| k.as_str() == s)
                .copied()
                .ok_or_else(|| usage(format!("unknown interference `{s}`")))
        })
        .collect()
}

#[derive(Serialize)]
struct GridInfo<'a> {
    config: &'a GridConfig,
    recorded_clips: Vec<&'a str>,
    contents: Vec<String>,
    variants: &'a [Variant],
    scenes: usize,
    rows: usize,
}

pub fn run(args: EvalArgs) -> Outcome<()> {
    let m = match &args.config {
        Some(path) => Manifest::load(path, KEYS).tag(Kind::Usage)?,
        None => Manifest::default(),
    };
    let out_dir: PathBuf = m
        .pick(args.output_dir, "output_dir")
        .tag(Kind::Usage)?
        .ok_or_else(|| usage("--output-dir is required"))?;

    let mut config = GridConfig::default();
    if let Some(v) = m.pick(args.k, "k").tag(Kind::Usage)? {
        config.k = v;
    }
    if let Some(v) = m.pick(args.delta, "delta").tag(Kind::Usage)? {
        config.max_shift = v;
    }
    config.pruning = m.pick(args.p, "p").tag(Kind::Usage)?;
    if let Some(v) = m.pick(args.seed, "seed").tag(Kind::Usage)? {
        config.seed = v;
    }
    if let Some(v) = m.pick(args.snr, "snr").tag(Kind::Usage)? {
        config.snr_db = v;
    }
    if let Some(v) = m.pick(args.drop_head, "drop_head").tag(Kind::Usage)? {
        config.drop_head = v;
    }
    if let Some(s) = m.pick(args.timbres, "timbres").tag(Kind::Usage)? {
        config.timbres = parse_timbres(&s)?;
    }
    if let Some(s) = m
        .pick(args.interferences, "interferences")
        .tag(Kind::Usage)?
    {
        config.interferences = parse_interferences(&s)?;
    }
    let contents = match m.pick(args.content, "content").tag(Kind::Usage)? {
        Some(s) => parse_content(&s)?,
        None => vec![Content::Melody, Content::Chords],
    };
    let variants = match m.pick(args.variants, "variants").tag(Kind::Usage)? {
        Some(s) => parse_variants(&s)?,
        None => Variant::ALL.to_vec(),
    };
    let mut clip_paths = args.clips;
    if clip_paths.is_empty() {
        if let Some(s) = m.raw("clips") {
            clip_paths = list(s).map(PathBuf::from).collect();
        }
    }
    for path in &clip_paths {
        let clip = RecordedClip::load(path, config.params.sample_rate)
            .context(format!("clip {}", path.display()))?;
        config.recorded.push(clip);
    }
    if config.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    if contents.is_empty() || variants.is_empty() || config.timbres.is_empty() {
        return Err(usage("content, variants and timbres must not be empty"));
    }
    if config.interferences.is_empty() && config.recorded.is_empty() {
        return Err(usage("no interference kinds or clips selected"));
    }

    let scenes = desk_scale_scenes(&config, &contents).context("building scenes")?;
    let results = run_grid(&scenes, &variants, &config).context("running grid")?;
    let table = SummaryTable::from_results(&results);

    std::fs::create_dir_all(&out_dir).tag(Kind::Io)?;
    let file = std::fs::File::create(out_dir.join("results.csv")).tag(Kind::Io)?;
    write_csv(&results, std::io::BufWriter::new(file)).context("writing results.csv")?;
    std::fs::write(out_dir.join("summary.txt"), table.to_string()).tag(Kind::Io)?;
    let info = GridInfo {
        config: &config,
        recorded_clips: config.recorded.iter().map(|c| c.name.as_str()).collect(),
        contents: contents.iter().map(ToString::to_string).collect(),
        variants: &variants,
        scenes: scenes.len(),
        rows: results.len(),
    };
    write_json(&out_dir.join("grid.json"), &info)?;

    print!("{table}");
    println!(
        "{} scenes x {} variants -> {}",
        scenes.len(),
        variants.len(),
        out_dir.display()
    );
    Ok(())
}
