//! `sikam`: separate, evaluate and benchmark shift-invariant KAM.

mod bench;
mod demo;
mod failure;
mod grid;
mod manifest;
mod separate;

use std::path::Path;

use clap::{Parser, Subcommand};
use serde::Serialize;

use failure::{Kind, Outcome, Tag};

#[derive(Debug, Parser)]
#[command(
    name = "sikam",
    version,
    about = "Shift-invariant kernel additive modelling for short interferences"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Remove an interference from the given time ranges of a recording.
    Separate(separate::SeparateArgs),
    /// Run the synthetic repeated / not-repeated evaluation grid.
    Eval(grid::EvalArgs),
    /// Time the kernels and check their scaling.
    Bench(bench::BenchArgs),
    /// Write a small synthetic mixture to try `separate` on.
    Demo(demo::DemoArgs),
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Outcome<()> {
    let mut text = serde_json::to_string_pretty(value).tag(Kind::Internal)?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|e| anyhow::Error::new(e).context(format!("writing {}", path.display())))
        .tag(Kind::Io)
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Separate(a) => separate::run(a),
        Command::Eval(a) => grid::run(a),
        Command::Bench(a) => bench::run(a),
        Command::Demo(a) => demo::run(a),
    };
    if let Err(f) = outcome {
        eprintln!("error: {f}");
        std::process::exit(f.kind.code());
    }
}
