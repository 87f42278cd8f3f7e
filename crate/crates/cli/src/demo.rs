//! `demo`: writes a synthetic mixture where the interference covers a note
//! that occurs only once, plus its clean reference.

use std::path::PathBuf;

use clap::Args;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use sikam_core::eval::{
    build_scene, interference_clip, melodies, render, Content, InterferenceKind, Placement, TIMBRES,
};
use sikam_core::wav::{write_wav, Audio};
use sikam_core::TransformParams;

use crate::failure::{CoreContext, Kind, Outcome, Tag};
use crate::write_json;

pub const SAMPLE_RATE: u32 = 22_050;

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Directory for mixture.wav, clean.wav and demo.json.
    #[arg(long)]
    output_dir: PathBuf,
    /// Seed for the interference clip.
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Serialize)]
struct DemoInfo {
    support: String,
    sample_rate: u32,
    samples: usize,
    frames: usize,
    support_frames: usize,
    /// Half the candidate pool, the largest K the eval grid would use.
    suggested_k: usize,
}

pub fn run(args: DemoArgs) -> Outcome<()> {
    let params = TransformParams::for_sample_rate(SAMPLE_RATE);
    let perf = render(
        &melodies()[0],
        0.5,
        &TIMBRES[0],
        Content::Melody,
        SAMPLE_RATE,
    )
    .context("rendering")?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let clip = interference_clip(InterferenceKind::Cough, 0.45, SAMPLE_RATE, &mut rng);
    let scene = build_scene("demo", &perf, &clip, Placement::NotRepeated, 12.0, &params)
        .context("building scene")?;

    let sr = SAMPLE_RATE as f64;
    let support = format!(
        "{:.6}:{:.6}",
        scene.extent.start as f64 / sr,
        scene.extent.end as f64 / sr
    );
    let frames = params.num_frames(scene.mixture.len());
    let info = DemoInfo {
        support: support.clone(),
        sample_rate: SAMPLE_RATE,
        samples: scene.mixture.len(),
        frames,
        support_frames: scene.support.len(),
        suggested_k: (frames - scene.support.len()) / 2,
    };

    std::fs::create_dir_all(&args.output_dir).tag(Kind::Io)?;
    write_wav(
        args.output_dir.join("mixture.wav"),
        &Audio::mono(SAMPLE_RATE, scene.mixture),
    )
    .context("mixture.wav")?;
    write_wav(
        args.output_dir.join("clean.wav"),
        &Audio::mono(SAMPLE_RATE, scene.clean),
    )
    .context("clean.wav")?;
    write_json(&args.output_dir.join("demo.json"), &info)?;
    println!(
        "support {support} ({} frames); suggested --k {}",
        info.support_frames, info.suggested_k
    );
    Ok(())
}
