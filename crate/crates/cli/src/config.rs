use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use symco::ingest::{shipped, DatasetConfig};
use symco::StratificationScheme;

/// Seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 20_210_501;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Describe,
    Jaccard,
    Hclust,
    Lpca,
    Umap,
    Aligned,
    Pipeline,
    Synth,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Strata {
    Broad,
    Decade,
    #[default]
    None,
}

impl Strata {
    pub fn scheme(self) -> Option<StratificationScheme> {
        match self {
            Strata::Broad => Some(StratificationScheme::Broad),
            Strata::Decade => Some(StratificationScheme::Decade),
            Strata::None => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Tight,
    Loose,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Tight => "tight",
            Preset::Loose => "loose",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    /// Generator preset: pillar2, sgss, css or cis.
    pub dataset: String,
    pub n: usize,
    pub missing_rate: f64,
    /// Replaces the preset's age range when set.
    pub ages: Option<(u32, u32)>,
}

/// Everything a run depends on besides the input files themselves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    /// Rule file path, or the name of a shipped vocabulary.
    pub rules: Option<String>,
    pub strata: Strata,
    pub preset: Preset,
    pub seed: u64,
    pub svg: bool,
    pub k_max: Option<usize>,
    pub synth: Option<SynthConfig>,
}

/// Rule text and where it came from.
pub struct Rules {
    pub source: String,
    pub text: String,
    pub config: DatasetConfig,
}

pub fn load_rules(spec: &str) -> Result<Rules> {
    let path = Path::new(spec);
    let text = if path.is_file() {
        std::fs::read_to_string(path).with_context(|| format!("reading rules {}", path.display()))?
    } else if let Some(text) = shipped::by_name(spec) {
        text.to_string()
    } else {
        bail!("rules `{spec}` is neither a file nor a shipped vocabulary (pillar2, sgss, test_and_trace, css, cis)");
    };
    let config = DatasetConfig::parse(&text).with_context(|| format!("parsing rules `{spec}`"))?;
    Ok(Rules {
        source: spec.to_string(),
        text,
        config,
    })
}
