//! Age stratification.

use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};

/// Half-open integer age band `[lo, hi)`; `hi = None` is unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeBand {
    pub lo: u32,
    pub hi: Option<u32>,
}

impl AgeBand {
    pub fn contains(&self, age: u32) -> bool {
        age >= self.lo && self.hi.is_none_or(|hi| age < hi)
    }

    /// `"18-54"` for `[18, 55)`, `"55+"` when unbounded.
    pub fn label(&self) -> String {
        match self.hi {
            Some(hi) => format!("{}-{}", self.lo, hi - 1),
            None => format!("{}+", self.lo),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "bands")]
pub enum StratificationScheme {
    /// 0-17, 18-54, 55+.
    Broad,
    /// 0-9, 10-19, ..., 80-89, 90+.
    Decade,
    Custom(Vec<AgeBand>),
}

impl StratificationScheme {
    pub fn bands(&self) -> Vec<AgeBand> {
        match self {
            StratificationScheme::Broad => vec![
                AgeBand { lo: 0, hi: Some(18) },
                AgeBand { lo: 18, hi: Some(55) },
                AgeBand { lo: 55, hi: None },
            ],
            StratificationScheme::Decade => (0..10)
                .map(|d| AgeBand {
                    lo: d * 10,
                    hi: (d < 9).then_some(d * 10 + 10),
                })
                .collect(),
            StratificationScheme::Custom(bands) => bands.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bands = self.bands();
        if bands.is_empty() {
            return Err(Error::InvalidStrata("no bands".into()));
        }
        for (i, b) in bands.iter().enumerate() {
            if let Some(hi) = b.hi {
                if hi <= b.lo {
                    return Err(Error::InvalidStrata(format!("empty band {}", b.label())));
                }
            }
            if let Some(next) = bands.get(i + 1) {
                match b.hi {
                    Some(hi) if hi <= next.lo => {}
                    _ => {
                        return Err(Error::InvalidStrata(format!(
                            "bands {} and {} overlap or are out of order",
                            b.label(),
                            next.label()
                        )))
                    }
                }
            }
        }
        Ok(())
    }

    pub fn band_of(&self, age: u32) -> Option<usize> {
        self.bands().iter().position(|b| b.contains(age))
    }
}

#[derive(Clone, Debug)]
pub struct Stratum {
    pub label: String,
    pub band: AgeBand,
    pub cohort: Cohort,
}

impl Stratum {
    /// Empty strata are kept so callers can decide whether to skip them.
    pub fn is_empty(&self) -> bool {
        self.cohort.n_cases() == 0
    }
}

/// Splits a cohort into age strata ordered by age. Cases with unknown age
/// are excluded from every stratum.
pub fn stratify(cohort: &Cohort, scheme: &StratificationScheme) -> Result<Vec<Stratum>> {
    scheme.validate()?;
    let bands = scheme.bands();
    let mut rows = vec![Vec::new(); bands.len()];
    for (i, case) in cohort.cases().iter().enumerate() {
        if let Some(age) = case.age {
            if let Some(b) = bands.iter().position(|b| b.contains(age)) {
                rows[b].push(i);
            }
        }
    }
    let strata: Vec<Stratum> = bands
        .into_iter()
        .zip(rows)
        .map(|(band, rows)| Stratum {
            label: band.label(),
            band,
            cohort: cohort.select_rows(&rows),
        })
        .collect();
    for s in strata.iter().filter(|s| s.is_empty()) {
        log::warn!("stratum {} is empty", s.label);
    }
    Ok(strata)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{CaseRecord, Category, Entry, SymptomDef};

    fn aged(ages: &[Option<u32>]) -> Cohort {
        let cases = ages
            .iter()
            .enumerate()
            .map(|(i, &age)| CaseRecord {
                id: format!("c{i}"),
                age,
                sex: None,
            })
            .collect();
        Cohort::new(
            cases,
            vec![SymptomDef::new("a", Category::Other)],
            vec![Entry::Present; ages.len()],
        )
        .unwrap()
    }

    #[test]
    fn broad_boundaries() {
        let s = StratificationScheme::Broad;
        assert_eq!(s.band_of(17), Some(0));
        assert_eq!(s.band_of(18), Some(1));
        assert_eq!(s.band_of(54), Some(1));
        assert_eq!(s.band_of(55), Some(2));
        assert_eq!(s.band_of(120), Some(2));
        let labels: Vec<_> = s.bands().iter().map(AgeBand::label).collect();
        assert_eq!(labels, ["0-17", "18-54", "55+"]);
    }

    #[test]
    fn decade_labels() {
        let labels: Vec<_> = StratificationScheme::Decade
            .bands()
            .iter()
            .map(AgeBand::label)
            .collect();
        assert_eq!(labels.len(), 10);
        assert_eq!(labels[0], "0-9");
        assert_eq!(labels[8], "80-89");
        assert_eq!(labels[9], "90+");
    }

    #[test]
    fn missing_age_excluded() {
        let c = aged(&[Some(5), None, Some(9), Some(10), Some(99)]);
        let strata = stratify(&c, &StratificationScheme::Decade).unwrap();
        let ids = |s: &Stratum| s.cohort.cases().iter().map(|c| c.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&strata[0]), ["c0", "c2"]);
        assert_eq!(ids(&strata[1]), ["c3"]);
        assert_eq!(ids(&strata[9]), ["c4"]);
        assert!(strata[4].is_empty());
        let total: usize = strata.iter().map(|s| s.cohort.n_cases()).sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn custom_validation() {
        let ok = StratificationScheme::Custom(vec![AgeBand { lo: 0, hi: Some(30) }, AgeBand { lo: 40, hi: None }]);
        assert!(ok.validate().is_ok());
        let c = aged(&[Some(35)]);
        let strata = stratify(&c, &ok).unwrap();
        assert!(strata.iter().all(Stratum::is_empty));

        let overlap = StratificationScheme::Custom(vec![AgeBand { lo: 0, hi: Some(30) }, AgeBand { lo: 20, hi: None }]);
        assert!(overlap.validate().is_err());
        let open_middle = StratificationScheme::Custom(vec![AgeBand { lo: 0, hi: None }, AgeBand { lo: 20, hi: None }]);
        assert!(open_middle.validate().is_err());
        assert!(StratificationScheme::Custom(vec![AgeBand { lo: 5, hi: Some(5) }])
            .validate()
            .is_err());
    }
}
