//! Case-by-symptom binary matrix and symptom taxonomy.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clinical grouping of a symptom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Systemic,
    LowerRespiratory,
    UpperRespiratory,
    Gastrointestinal,
    AlteredState,
    Other,
}

impl Category {
    pub const ALL: [Category; 6] = [
        Category::Systemic,
        Category::LowerRespiratory,
        Category::UpperRespiratory,
        Category::Gastrointestinal,
        Category::AlteredState,
        Category::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Systemic => "systemic",
            Category::LowerRespiratory => "lower_respiratory",
            Category::UpperRespiratory => "upper_respiratory",
            Category::Gastrointestinal => "gastrointestinal",
            Category::AlteredState => "altered_state",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown category `{s}`"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymptomDef {
    pub id: String,
    pub label: String,
    pub category: Category,
}

impl SymptomDef {
    pub fn new(id: impl Into<String>, category: Category) -> Self {
        let id = id.into();
        let label = id.replace('_', " ");
        SymptomDef { id, label, category }
    }
}

/// One cell of the binary matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Entry {
    Absent,
    Present,
    Missing,
}

impl Entry {
    pub fn from_bool(present: bool) -> Self {
        if present {
            Entry::Present
        } else {
            Entry::Absent
        }
    }

    #[inline]
    pub fn is_present(self) -> bool {
        self == Entry::Present
    }

    #[inline]
    pub fn is_observed(self) -> bool {
        self != Entry::Missing
    }

    /// 1.0 / 0.0 for observed entries.
    #[inline]
    pub fn value(self) -> Option<f64> {
        match self {
            Entry::Absent => Some(0.0),
            Entry::Present => Some(1.0),
            Entry::Missing => None,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Entry::Absent => "0",
            Entry::Present => "1",
            Entry::Missing => "NA",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub id: String,
    pub age: Option<u32>,
    pub sex: Option<String>,
}

/// Immutable `n x p` matrix of [`Entry`] with per-case and per-symptom
/// metadata. Entries are stored row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Cohort {
    cases: Vec<CaseRecord>,
    symptoms: Vec<SymptomDef>,
    entries: Vec<Entry>,
}

impl Cohort {
    pub fn new(cases: Vec<CaseRecord>, symptoms: Vec<SymptomDef>, entries: Vec<Entry>) -> Result<Self> {
        if entries.len() != cases.len() * symptoms.len() {
            return Err(Error::Shape(format!(
                "{} entries for {} cases x {} symptoms",
                entries.len(),
                cases.len(),
                symptoms.len()
            )));
        }
        let mut seen = HashSet::new();
        for s in &symptoms {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateSymptom(s.id.clone()));
            }
        }
        let mut seen = HashSet::new();
        for c in &cases {
            if !seen.insert(c.id.as_str()) {
                return Err(Error::DuplicateCase(c.id.clone()));
            }
        }
        Ok(Cohort {
            cases,
            symptoms,
            entries,
        })
    }

    pub fn n_cases(&self) -> usize {
        self.cases.len()
    }

    pub fn n_symptoms(&self) -> usize {
        self.symptoms.len()
    }

    pub fn cases(&self) -> &[CaseRecord] {
        &self.cases
    }

    pub fn symptoms(&self) -> &[SymptomDef] {
        &self.symptoms
    }

    pub fn symptom_ids(&self) -> Vec<String> {
        self.symptoms.iter().map(|s| s.id.clone()).collect()
    }

    pub fn symptom_index(&self, id: &str) -> Option<usize> {
        self.symptoms.iter().position(|s| s.id == id)
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Entry {
        self.entries[row * self.symptoms.len() + col]
    }

    pub fn row(&self, row: usize) -> &[Entry] {
        let p = self.symptoms.len();
        &self.entries[row * p..(row + 1) * p]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Entry]> {
        // chunks_exact panics on zero width
        let p = self.symptoms.len().max(1);
        self.entries.chunks_exact(p)
    }

    pub fn column(&self, col: usize) -> Vec<Entry> {
        (0..self.n_cases()).map(|r| self.get(r, col)).collect()
    }

    pub fn has_missing(&self) -> bool {
        self.entries.iter().any(|e| !e.is_observed())
    }

    /// New cohort holding the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Cohort {
        let mut entries = Vec::with_capacity(rows.len() * self.n_symptoms());
        for &r in rows {
            entries.extend_from_slice(self.row(r));
        }
        Cohort {
            cases: rows.iter().map(|&r| self.cases[r].clone()).collect(),
            symptoms: self.symptoms.clone(),
            entries,
        }
    }

    /// New cohort holding the given symptom columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Cohort {
        let mut entries = Vec::with_capacity(self.n_cases() * cols.len());
        for row in self.rows() {
            entries.extend(cols.iter().map(|&c| row[c]));
        }
        Cohort {
            cases: self.cases.clone(),
            symptoms: cols.iter().map(|&c| self.symptoms[c].clone()).collect(),
            entries,
        }
    }

    pub fn is_symptomatic(&self) -> bool {
        self.rows().all(|r| r.iter().any(|e| e.is_present()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub retained: usize,
    pub dropped: usize,
}

impl FilterReport {
    pub fn retained_fraction(&self) -> f64 {
        let total = self.retained + self.dropped;
        if total == 0 {
            0.0
        } else {
            self.retained as f64 / total as f64
        }
    }
}

/// Keeps exactly the cases reporting at least one symptom.
pub fn filter_symptomatic(cohort: &Cohort) -> Result<(Cohort, FilterReport)> {
    let rows: Vec<usize> = cohort
        .rows()
        .enumerate()
        .filter(|(_, r)| r.iter().any(|e| e.is_present()))
        .map(|(i, _)| i)
        .collect();
    let report = FilterReport {
        retained: rows.len(),
        dropped: cohort.n_cases() - rows.len(),
    };
    if rows.is_empty() {
        return Err(Error::EmptyCohort);
    }
    Ok((cohort.select_rows(&rows), report))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymptomFrequency {
    pub id: String,
    pub category: Category,
    pub present: usize,
    pub observed: usize,
    /// `None` when the column has no observed entries.
    pub proportion: Option<f64>,
}

pub fn symptom_frequencies(cohort: &Cohort) -> Vec<SymptomFrequency> {
    if !cohort.is_symptomatic() {
        log::warn!("symptom frequencies computed on a cohort that is not symptomatic-filtered");
    }
    let p = cohort.n_symptoms();
    let mut present = vec![0usize; p];
    let mut observed = vec![0usize; p];
    for row in cohort.rows() {
        for (j, e) in row.iter().enumerate() {
            if e.is_observed() {
                observed[j] += 1;
                if e.is_present() {
                    present[j] += 1;
                }
            }
        }
    }
    cohort
        .symptoms()
        .iter()
        .enumerate()
        .map(|(j, s)| SymptomFrequency {
            id: s.id.clone(),
            category: s.category,
            present: present[j],
            observed: observed[j],
            proportion: (observed[j] > 0).then(|| present[j] as f64 / observed[j] as f64),
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod test_util {
    use super::*;

    /// Cohort from rows of tokens: 1, 0, or anything else for missing.
    pub fn cohort_from_rows(rows: &[&[i8]]) -> Cohort {
        let p = rows.first().map_or(0, |r| r.len());
        let symptoms = (0..p)
            .map(|j| SymptomDef::new(format!("s{j}"), Category::Other))
            .collect();
        let cases = (0..rows.len())
            .map(|i| CaseRecord {
                id: format!("c{i}"),
                age: Some(30),
                sex: None,
            })
            .collect();
        let entries = rows
            .iter()
            .flat_map(|r| {
                r.iter().map(|&v| match v {
                    1 => Entry::Present,
                    0 => Entry::Absent,
                    _ => Entry::Missing,
                })
            })
            .collect();
        Cohort::new(cases, symptoms, entries).unwrap()
    }
}
