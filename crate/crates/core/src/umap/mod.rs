//! 2D UMAP embeddings of symptoms from a precomputed distance matrix, and
//! aligned embeddings across ordered strata or datasets.

mod aligned;
mod graph;
mod layout;
mod ribbon;

pub use aligned::{
    align_datasets, aligned_embed, stratum_seed, AlignedEmbeddingSet, Relation, DEFAULT_ALIGNMENT_STRENGTH,
    DEFAULT_WINDOW,
};
pub use graph::{fuzzy_graph, FuzzyGraph};
pub use layout::{embed, find_ab_params, Init};
pub use ribbon::{interpolate_ribbon, Ribbon, RibbonSegment};

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbedParams {
    pub n_neighbours: usize,
    pub min_dist: f64,
    pub n_epochs: usize,
    pub learning_rate: f64,
    pub negative_sample_rate: usize,
    pub seed: u64,
}

pub const DEFAULT_MIN_DIST: f64 = 0.1;
pub const DEFAULT_EPOCHS: usize = 500;

impl EmbedParams {
    fn with_neighbours(n_neighbours: usize, seed: u64) -> Self {
        EmbedParams {
            n_neighbours,
            min_dist: DEFAULT_MIN_DIST,
            n_epochs: DEFAULT_EPOCHS,
            learning_rate: 1.0,
            negative_sample_rate: 5,
            seed,
        }
    }

    /// Local structure: two neighbours.
    pub fn tight(seed: u64) -> Self {
        Self::with_neighbours(2, seed)
    }

    /// Global structure: four neighbours.
    pub fn loose(seed: u64) -> Self {
        Self::with_neighbours(4, seed)
    }

    pub fn preset(name: &str, seed: u64) -> Option<Self> {
        match name {
            "tight" => Some(Self::tight(seed)),
            "loose" => Some(Self::loose(seed)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub labels: Vec<String>,
    pub coords: Vec<[f64; 2]>,
    pub params: EmbedParams,
    pub seed: u64,
    pub init: Init,
}

impl Embedding {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        let [x0, y0] = self.coords[a];
        let [x1, y1] = self.coords[b];
        (x0 - x1).hypot(y0 - y1)
    }

    /// Largest pairwise distance.
    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for a in 0..self.len() {
            for b in a + 1..self.len() {
                d = d.max(self.distance(a, b));
            }
        }
        d
    }

    pub fn centroid(&self, idx: &[usize]) -> [f64; 2] {
        let n = idx.len() as f64;
        let (sx, sy) = idx.iter().fold((0.0, 0.0), |(sx, sy), &i| {
            (sx + self.coords[i][0], sy + self.coords[i][1])
        });
        [sx / n, sy / n]
    }
}
