mod commands;
mod io_util;

use clap::{Parser, Subcommand};

/// Entity-grounded evaluation of generated radiology reports.
#[derive(Parser)]
#[command(name = "gema", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic corpus with ground-truth entities and
    /// annotations.
    Synth(commands::synth::SynthArgs),
    /// Extract structured entities from corpus reports through a backend.
    Extract(commands::extract::ExtractArgs),
    /// Score candidate reports against their references.
    Score(commands::score::ScoreArgs),
    /// Emit per-study scores alongside token-overlap baselines as CSV.
    Benchmark(commands::benchmark::BenchmarkArgs),
    /// Correlate a score file with rater annotations.
    Correlate(commands::correlate::CorrelateArgs),
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Extract(args) => commands::extract::run(args),
        Command::Score(args) => commands::score::run(args),
        Command::Benchmark(args) => commands::benchmark::run(args),
        Command::Correlate(args) => commands::correlate::run(args),
    }
}
