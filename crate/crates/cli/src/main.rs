//! `phrasebias` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use phrasebias::pipeline::{Overrides, Pipeline, Stage, StageReport};
use phrasebias::synth::{generate, SynthConfig};
use phrasebias::Error;

#[derive(Parser)]
#[command(name = "phrasebias", version, about = "Measure media bias from phrase usage across news sources")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline configuration (TOML).
    #[arg(long, default_value = "config.toml")]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Restricts the run to one topic id.
    #[arg(long)]
    topic: Option<String>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Source lean ratings used to colour figures (`source lean` per line).
    #[arg(long)]
    ratings: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory receiving corpus.jsonl, config.toml and truth.json.
    #[arg(long, default_value = "synth")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Topics planted on the left-right axis.
    #[arg(long, default_value_t = 6)]
    left_right_topics: usize,
    /// Topics planted on the establishment axis.
    #[arg(long, default_value_t = 6)]
    establishment_topics: usize,
    #[arg(long, default_value_t = 20)]
    sources: usize,
    #[arg(long, default_value_t = 40)]
    articles_per_source: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize the corpus and split it by topic.
    Ingest(RunArgs),
    /// Count phrases per topic and source.
    Count(RunArgs),
    /// Score and purge candidate phrases.
    Select(RunArgs),
    /// Fit the Poisson factorization per topic.
    Fit(RunArgs),
    /// Correlate standardized topic components.
    Correlate(RunArgs),
    /// Place components on the two bias axes.
    Cluster(RunArgs),
    /// Aggregate sources into the two-axis landscape.
    Landscape(RunArgs),
    /// Run every stage, including export.
    All(RunArgs),
    /// Write SVG figures.
    Export(RunArgs),
    /// Generate a synthetic corpus with planted stances.
    Synth(SynthArgs),
}

fn print_report(report: &StageReport) {
    let status = if report.skipped { "up to date" } else { "done" };
    println!("{:<10} {status} ({} artifacts)", report.stage.name(), report.artifacts);
}

fn pipeline(args: RunArgs) -> Result<Pipeline, Error> {
    let overrides = Overrides { seed: args.seed, topic: args.topic, out: args.out, ratings: args.ratings };
    Pipeline::from_file(&args.config, overrides)
}

fn run(command: Command) -> Result<(), Error> {
    let (stage, args) = match command {
        Command::Synth(a) => {
            let config = SynthConfig {
                seed: a.seed,
                left_right_topics: a.left_right_topics,
                establishment_topics: a.establishment_topics,
                sources: a.sources,
                articles_per_source: a.articles_per_source,
                ..SynthConfig::default()
            };
            let corpus = generate(&config)?;
            corpus.write_to(&a.out, a.seed)?;
            println!("wrote {} articles to {}", corpus.articles.len(), a.out.display());
            return Ok(());
        }
        Command::All(args) => {
            for report in pipeline(args)?.run_all()? {
                print_report(&report);
            }
            return Ok(());
        }
        Command::Ingest(a) => (Stage::Ingest, a),
        Command::Count(a) => (Stage::Count, a),
        Command::Select(a) => (Stage::Select, a),
        Command::Fit(a) => (Stage::Fit, a),
        Command::Correlate(a) => (Stage::Correlate, a),
        Command::Cluster(a) => (Stage::Cluster, a),
        Command::Landscape(a) => (Stage::Landscape, a),
        Command::Export(a) => (Stage::Export, a),
    };
    print_report(&pipeline(args)?.run(stage)?);
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
