//! Front end for the symptom co-occurrence pipeline: stage orchestration,
//! JSON artifacts with a replayable manifest, and SVG figures.

pub mod artifacts;
pub mod config;
pub mod manifest;
pub mod run;
pub mod svg;
