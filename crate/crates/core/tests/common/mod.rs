#![allow(dead_code)]

use symco::cohort::CaseRecord;
use symco::{Category, Cohort, Entry, SymptomDef};

/// Cohort from a row-major grid of entries, one symptom per column.
pub fn cohort_from_grid(n: usize, p: usize, cells: &[Entry]) -> Cohort {
    let cases = (0..n)
        .map(|i| CaseRecord {
            id: format!("c{i}"),
            age: Some(40),
            sex: None,
        })
        .collect();
    let symptoms = (0..p)
        .map(|j| SymptomDef::new(format!("s{j}"), Category::Other))
        .collect();
    Cohort::new(cases, symptoms, cells.to_vec()).unwrap()
}

pub fn labels(p: usize) -> Vec<String> {
    (0..p).map(|i| format!("x{i}")).collect()
}
