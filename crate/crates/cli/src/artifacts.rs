//! JSON artifact schemas. Every file the CLI writes deserializes into one
//! of these types; unknown fields are rejected so the types double as the
//! schema.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use symco::cohort::SymptomFrequency;
use symco::hclust::{Dendrogram, Heatmap};
use symco::lpca::{DevianceScan, ModelExport, Selection};
use symco::umap::{EmbedParams, Init, Relation, Ribbon};
use symco::Category;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeSummary {
    pub known: usize,
    pub missing: usize,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryGroup {
    pub category: Category,
    pub symptoms: Vec<SymptomFrequency>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StratumSize {
    pub label: String,
    pub cases: usize,
    pub symptomatic: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortSummary {
    pub cases: usize,
    pub symptomatic: usize,
    pub asymptomatic: usize,
    pub symptomatic_proportion: f64,
    pub age: AgeSummary,
    /// Case counts per sex token; unknown sex is counted under `"NA"`.
    pub sex: BTreeMap<String, usize>,
    /// Frequencies among symptomatic cases, grouped by category.
    pub frequencies: Vec<CategoryGroup>,
    pub strata: Vec<StratumSize>,
}

/// Jaccard distances; mirrors the library's serialized distance matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistanceArtifact {
    pub labels: Vec<String>,
    #[serde(rename = "D")]
    pub values: Vec<Option<f64>>,
    pub support: Vec<usize>,
    #[serde(default)]
    pub undefined: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DendrogramArtifact {
    pub dendrogram: Dendrogram,
    pub leaf_order: Vec<usize>,
    pub newick: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatmapArtifact {
    /// Leaf order; `labels` and `values` are already permuted by it.
    pub order: Vec<usize>,
    pub labels: Vec<String>,
    pub values: Vec<Vec<f64>>,
    /// Dendrogram over the original (unpermuted) symptom indices.
    pub dendrogram: Dendrogram,
}

impl HeatmapArtifact {
    pub fn new(h: Heatmap, dendrogram: Dendrogram) -> Self {
        HeatmapArtifact {
            order: h.order,
            labels: h.labels,
            values: h.values,
            dendrogram,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LpcaArtifact {
    pub scan: DevianceScan,
    pub selection: Selection,
    /// Model refitted at the selected `k`.
    pub model: ModelExport,
    /// `P(0..=k_max)`, starting at 0.
    #[serde(rename = "P")]
    pub proportions: Vec<f64>,
    /// `M(1..=k_max)`.
    #[serde(rename = "M")]
    pub marginals: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadingBar {
    pub symptom: String,
    pub loading: f64,
    pub category: Category,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentLoadings {
    /// 1-based component number.
    pub component: usize,
    pub bars: Vec<LoadingBar>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadingsArtifact {
    pub components: Vec<ComponentLoadings>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingArtifact {
    pub labels: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    pub params: EmbedParams,
    pub seed: u64,
    pub preset: String,
    pub init: Init,
    pub categories: Vec<Category>,
    /// Share of symptomatic cases reporting each symptom.
    pub frequencies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignedArtifact {
    pub preset: String,
    pub strata: Vec<String>,
    pub positions: Vec<usize>,
    pub embeddings: Vec<EmbeddingArtifact>,
    pub relations: Vec<Relation>,
    pub window: usize,
    pub alignment_strength: f64,
    /// Strata left out: empty after filtering, or too few symptoms.
    pub skipped: Vec<String>,
    /// Symptoms dropped per stratum because nobody reported them there.
    pub dropped_symptoms: BTreeMap<String, Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RibbonArtifact {
    pub preset: String,
    pub steps_per_gap: usize,
    pub strata: Vec<String>,
    pub ribbons: Vec<Ribbon>,
}

/// Validates `text` against the schema for `kind`.
pub fn validate(kind: &str, text: &str) -> anyhow::Result<()> {
    fn check<T: serde::de::DeserializeOwned>(text: &str) -> anyhow::Result<()> {
        serde_json::from_str::<T>(text)?;
        Ok(())
    }
    match kind {
        "summary" => check::<CohortSummary>(text),
        "distance" => check::<DistanceArtifact>(text),
        "dendrogram" => check::<DendrogramArtifact>(text),
        "heatmap" => check::<HeatmapArtifact>(text),
        "lpca" => check::<LpcaArtifact>(text),
        "loadings" => check::<LoadingsArtifact>(text),
        "embedding" => check::<EmbeddingArtifact>(text),
        "aligned" => check::<AlignedArtifact>(text),
        "ribbons" => check::<RibbonArtifact>(text),
        "manifest" => check::<crate::manifest::Manifest>(text),
        "truth" => check::<symco::synth::GroundTruth>(text),
        other => anyhow::bail!("unknown artifact kind `{other}`"),
    }
}
