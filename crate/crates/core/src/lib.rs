//! Unsupervised analysis of binary symptom co-occurrence data.
//!
//! The pipeline runs over an `n x p` case-by-symptom matrix with missing
//! entries:
//!
//! * [`cohort`] and [`ingest`] build the binary matrix from CSV plus a rule
//!   table, filter to symptomatic cases and stratify by age.
//! * [`distance`] computes Jaccard distances between symptom columns under
//!   pairwise deletion.
//! * [`hclust`] builds complete-linkage dendrograms, cuts and leaf orders.
//! * [`lpca`] fits logistic PCA by majorization-minimization and selects the
//!   number of components from the deviance scan.
//! * [`umap`] embeds symptoms in 2D from the distance matrix, optionally
//!   aligned across ordered strata or across datasets.
//! * [`synth`] generates cohorts with planted structure for validation.

pub mod cohort;
pub mod distance;
pub mod error;
pub mod hclust;
pub mod ingest;
pub mod linalg;
pub mod lpca;
pub mod strata;
pub mod synth;
pub mod umap;

pub use cohort::{Category, Cohort, Entry, SymptomDef};
pub use distance::DistanceMatrix;
pub use error::{Error, Result};
pub use hclust::Dendrogram;
pub use lpca::LpcaModel;
pub use strata::StratificationScheme;

/// Symptoms collected by every dataset; cross-dataset alignment uses these.
pub const CORE_SYMPTOMS: [&str; 7] = [
    "cough",
    "diarrhoea",
    "fatigue",
    "fever",
    "headache",
    "muscle_ache",
    "sore_throat",
];
