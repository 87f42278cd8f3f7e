//! `bench`: stage timings and scaling ratios of the four kernels.

use std::path::PathBuf;

use clap::Args;

use sikam_core::complexity::{default_plan, run_bench, run_plan, BenchSettings, BenchSize};
use sikam_core::Variant;

use crate::failure::{usage, CoreContext, Kind, Outcome, Tag};
use crate::manifest::Manifest;
use crate::write_json;

const KEYS: &[&str] = &["sizes", "variants", "repetitions", "k", "p", "seed", "json"];

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Sizes as `F:T:delta[,F:T:delta...]`, each timed for every variant.
    /// Without it, a built-in plan covering the scaling checks is used.
    #[arg(long)]
    sizes: Option<String>,
    /// Comma list of kernels.
    #[arg(long)]
    variants: Option<String>,
    /// Timing rounds; stage times are the fastest round.
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Seed for the random magnitude matrices.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
}

pub fn parse_sizes(spec: &str) -> Outcome<Vec<BenchSize>> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            let parts: Vec<usize> = s
                .split(':')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|e| usage(format!("size `{s}`: {e}")))?;
            match parts[..] {
                [bins, frames, max_shift] if bins >= 2 && frames >= 2 => Ok(BenchSize {
                    bins,
                    frames,
                    max_shift,
                }),
                _ => Err(usage(format!("size `{s}` is not F:T:delta with F, T >= 2"))),
            }
        })
        .collect()
}

pub fn run(args: BenchArgs) -> Outcome<()> {
    let m = match &args.config {
        Some(path) => Manifest::load(path, KEYS).tag(Kind::Usage)?,
        None => Manifest::default(),
    };
    let mut settings = BenchSettings::default();
    if let Some(v) = m.pick(args.repetitions, "repetitions").tag(Kind::Usage)? {
        settings.repetitions = v;
    }
    if let Some(v) = m.pick(args.k, "k").tag(Kind::Usage)? {
        settings.k = v;
    }
    if let Some(v) = m.pick(args.p, "p").tag(Kind::Usage)? {
        settings.pruning = v;
    }
    if let Some(v) = m.pick(args.seed, "seed").tag(Kind::Usage)? {
        settings.seed = v;
    }
    if settings.k == 0 {
        return Err(usage("--k must be at least 1"));
    }
    let variants: Vec<Variant> = match m.pick(args.variants, "variants").tag(Kind::Usage)? {
        Some(s) => s
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| v.parse::<Variant>().map_err(usage))
            .collect::<Outcome<_>>()?,
        None => Variant::ALL.to_vec(),
    };
    let report = match m.pick(args.sizes, "sizes").tag(Kind::Usage)? {
        Some(spec) => {
            let sizes = parse_sizes(&spec)?;
            if let Some(s) = sizes
                .iter()
                .find(|s| s.frames <= settings.k + settings.pruning)
            {
                return Err(crate::failure::Failure {
                    kind: Kind::Infeasible,
                    error: anyhow::anyhow!(
                        "T = {} leaves fewer than K + P = {} candidates",
                        s.frames,
                        settings.k + settings.pruning
                    ),
                });
            }
            run_bench(&sizes, &variants, &settings)
        }
        None => {
            let plan: Vec<_> = default_plan()
                .into_iter()
                .filter(|(v, _)| variants.contains(v))
                .collect();
            run_plan(&plan, &settings)
        }
    }
    .context("benchmark")?;
    print!("{report}");
    let json: Option<PathBuf> = m.pick(args.json, "json").tag(Kind::Usage)?;
    if let Some(path) = json {
        write_json(&path, &report)?;
    }
    Ok(())
}
