use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use symco_cli::config::{Command, Preset, RunConfig, Strata, SynthConfig, DEFAULT_SEED};
use symco_cli::run::{replay, run};

/// Symptom co-occurrence analysis: Jaccard distances, complete-linkage
/// dendrograms, logistic PCA and (aligned) UMAP embeddings.
#[derive(Parser)]
#[command(name = "symco", version, args_conflicts_with_subcommands = true)]
struct Cli {
    #[command(subcommand)]
    command: Option<Sub>,

    /// Output directory.
    #[arg(long, global = true, env = "SYMCO_OUT", default_value = "symco-out")]
    out: PathBuf,

    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    seed: u64,

    /// Also render SVG figures next to the JSON artifacts.
    #[arg(long, global = true)]
    svg: bool,

    /// Re-run a recorded manifest and check the outputs are byte-identical.
    #[arg(long)]
    replay: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Case-by-symptom CSV.
    #[arg(long)]
    input: PathBuf,

    /// Rule file, or a shipped vocabulary: pillar2, sgss, test_and_trace, css, cis.
    #[arg(long)]
    rules: String,

    #[arg(long, value_enum, default_value_t = Strata::None)]
    strata: Strata,

    /// UMAP preset for single and aligned embeddings.
    #[arg(long, value_enum, default_value_t = Preset::Tight)]
    preset: Preset,

    /// Largest component count in the deviance scan [default: min(p, 8)].
    #[arg(long)]
    k_max: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Cohort summary: counts, ages, sexes, symptom frequencies.
    Describe(DataArgs),
    /// Jaccard distance matrix between symptoms.
    Jaccard(DataArgs),
    /// Complete-linkage dendrogram and heatmap order.
    Hclust(DataArgs),
    /// Logistic PCA deviance scan, component selection and loadings.
    Lpca(DataArgs),
    /// 2D embedding of the symptoms.
    Umap(DataArgs),
    /// Embeddings aligned across age strata, with ribbons.
    Aligned(DataArgs),
    /// Every analysis in sequence.
    Pipeline(DataArgs),
    /// Generate a synthetic cohort with its rule file and ground truth.
    Synth {
        /// Generator preset: pillar2, sgss, css or cis.
        #[arg(long, default_value = "css")]
        dataset: String,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 0.0)]
        missing_rate: f64,
        /// Youngest age drawn [default: the preset's].
        #[arg(long, requires = "max_age")]
        min_age: Option<u32>,
        /// Oldest age drawn [default: the preset's].
        #[arg(long, requires = "min_age")]
        max_age: Option<u32>,
    },
}

fn config(cli: &Cli, sub: &Sub) -> RunConfig {
    let base = RunConfig {
        command: Command::Synth,
        input: None,
        rules: None,
        strata: Strata::None,
        preset: Preset::Tight,
        seed: cli.seed,
        svg: cli.svg,
        k_max: None,
        synth: None,
    };
    let (command, a) = match sub {
        Sub::Synth {
            dataset,
            n,
            missing_rate,
            min_age,
            max_age,
        } => {
            return RunConfig {
                synth: Some(SynthConfig {
                    dataset: dataset.clone(),
                    n: *n,
                    missing_rate: *missing_rate,
                    ages: min_age.zip(*max_age),
                }),
                ..base
            }
        }
        Sub::Describe(a) => (Command::Describe, a),
        Sub::Jaccard(a) => (Command::Jaccard, a),
        Sub::Hclust(a) => (Command::Hclust, a),
        Sub::Lpca(a) => (Command::Lpca, a),
        Sub::Umap(a) => (Command::Umap, a),
        Sub::Aligned(a) => (Command::Aligned, a),
        Sub::Pipeline(a) => (Command::Pipeline, a),
    };
    RunConfig {
        command,
        input: Some(a.input.clone()),
        rules: Some(a.rules.clone()),
        strata: a.strata,
        preset: a.preset,
        k_max: a.k_max,
        ..base
    }
}

fn main_inner() -> Result<bool> {
    let cli = Cli::parse();
    if let Some(path) = &cli.replay {
        let r = replay(path, &cli.out)?;
        for m in &r.mismatches {
            eprintln!("differs from recording: {m}");
        }
        return Ok(r.mismatches.is_empty() && r.manifest.is_complete());
    }
    let Some(sub) = &cli.command else {
        anyhow::bail!("a subcommand or --replay is required (see --help)");
    };
    let manifest = run(&config(&cli, sub), &cli.out)?;
    for name in &manifest.partial {
        eprintln!("incomplete stage: {name}");
    }
    Ok(manifest.is_complete())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match main_inner() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
