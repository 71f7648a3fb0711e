//! CSV ingestion, rule/taxonomy configuration, and binary re-export.
//!
//! Configuration is line-based:
//!
//! ```text
//! # comment
//! fatigue = systemic
//! fatigue : none < mild < severe @ severe
//! ```
//!
//! `id = category` declares a symptom (declaration order is column order);
//! `id : l1 < l2 < ... @ threshold` declares an ordinal binarization rule.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cohort::{CaseRecord, Category, Cohort, Entry, SymptomDef};
use crate::error::{Error, Result};

pub const CASE_ID: &str = "case_id";
pub const AGE: &str = "age";
pub const SEX: &str = "sex";

/// Maps ordered levels to present (at or above threshold) or absent.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinarizationRule {
    pub symptom: String,
    pub levels: Vec<String>,
    threshold: usize,
}

impl BinarizationRule {
    pub fn new(symptom: impl Into<String>, levels: Vec<String>, threshold: &str) -> Result<Self> {
        let symptom = symptom.into();
        let threshold = levels
            .iter()
            .position(|l| l == threshold)
            .ok_or_else(|| Error::param(format!("threshold `{threshold}` is not a level of `{symptom}`")))?;
        let unique: HashSet<_> = levels.iter().collect();
        if unique.len() != levels.len() {
            return Err(Error::param(format!("duplicate level in rule for `{symptom}`")));
        }
        Ok(BinarizationRule {
            symptom,
            levels,
            threshold,
        })
    }

    pub fn threshold(&self) -> &str {
        &self.levels[self.threshold]
    }

    pub fn covers(&self, token: &str) -> bool {
        self.levels.iter().any(|l| l == token)
    }

    /// Unlisted tokens map to [`Entry::Missing`].
    pub fn apply(&self, token: &str) -> Entry {
        match self.levels.iter().position(|l| l == token) {
            Some(i) => Entry::from_bool(i >= self.threshold),
            None => Entry::Missing,
        }
    }
}

/// Symptom taxonomy plus binarization rules for one dataset vocabulary.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub taxonomy: Vec<SymptomDef>,
    pub rules: Vec<BinarizationRule>,
}

impl DatasetConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = DatasetConfig::default();
        let mut ids = HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: line_no, message };
            if let Some((id, rest)) = line.split_once(':') {
                let (levels, threshold) = rest
                    .split_once('@')
                    .ok_or_else(|| err("rule needs `@ threshold`".into()))?;
                let levels: Vec<String> = levels.split('<').map(|l| l.trim().to_string()).collect();
                if levels.iter().any(String::is_empty) {
                    return Err(err("empty level name".into()));
                }
                let rule =
                    BinarizationRule::new(id.trim(), levels, threshold.trim()).map_err(|e| err(e.to_string()))?;
                cfg.rules.push(rule);
            } else if let Some((id, category)) = line.split_once('=') {
                let id = id.trim();
                if id.is_empty() || id.contains(char::is_whitespace) {
                    return Err(err(format!("invalid symptom id `{id}`")));
                }
                let category: Category = category.trim().parse().map_err(err)?;
                if !ids.insert(id.to_string()) {
                    return Err(err(format!("duplicate symptom `{id}`")));
                }
                cfg.taxonomy.push(SymptomDef::new(id, category));
            } else {
                return Err(err(format!("cannot parse `{line}`")));
            }
        }
        for rule in &cfg.rules {
            if !ids.contains(&rule.symptom) {
                return Err(Error::param(format!("rule for undeclared symptom `{}`", rule.symptom)));
            }
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for s in &self.taxonomy {
            out.push_str(&format!("{} = {}\n", s.id, s.category));
        }
        for r in &self.rules {
            out.push_str(&format!(
                "{} : {} @ {}\n",
                r.symptom,
                r.levels.join(" < "),
                r.threshold()
            ));
        }
        out
    }

    pub fn rule_for(&self, symptom: &str) -> Option<&BinarizationRule> {
        self.rules.iter().find(|r| r.symptom == symptom)
    }
}

fn is_missing_token(token: &str) -> bool {
    token.is_empty() || token == "NA"
}

pub fn ingest_csv(path: impl AsRef<Path>, config: &DatasetConfig) -> Result<Cohort> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    ingest_reader(file, config)
}

pub fn ingest_reader<R: Read>(reader: R, config: &DatasetConfig) -> Result<Cohort> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr.headers()?.clone();

    let declared: HashMap<&str, usize> = config
        .taxonomy
        .iter()
        .enumerate()
        .map(|(j, s)| (s.id.as_str(), j))
        .collect();
    let mut symptom_cols = vec![None; config.taxonomy.len()];
    let (mut id_col, mut age_col, mut sex_col) = (None, None, None);
    for (i, h) in headers.iter().enumerate() {
        match h.trim() {
            CASE_ID => id_col = Some(i),
            AGE => age_col = Some(i),
            SEX => sex_col = Some(i),
            name => match declared.get(name) {
                Some(&j) => symptom_cols[j] = Some(i),
                None => return Err(Error::UnknownColumn(name.to_string())),
            },
        }
    }
    let id_col = id_col.ok_or_else(|| Error::MissingColumn(CASE_ID.into()))?;
    let age_col = age_col.ok_or_else(|| Error::MissingColumn(AGE.into()))?;
    let sex_col = sex_col.ok_or_else(|| Error::MissingColumn(SEX.into()))?;
    let symptom_cols: Vec<usize> = symptom_cols
        .iter()
        .zip(&config.taxonomy)
        .map(|(c, s)| c.ok_or_else(|| Error::MissingColumn(s.id.clone())))
        .collect::<Result<_>>()?;
    let rules: Vec<Option<&BinarizationRule>> = config.taxonomy.iter().map(|s| config.rule_for(&s.id)).collect();

    let mut cases = Vec::new();
    let mut entries = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let row = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(i).unwrap_or("").trim();

        let age_tok = field(age_col);
        let age = if is_missing_token(age_tok) {
            None
        } else {
            Some(age_tok.parse::<u32>().map_err(|_| Error::InvalidAge {
                row,
                token: age_tok.to_string(),
            })?)
        };
        let sex_tok = field(sex_col);
        cases.push(CaseRecord {
            id: field(id_col).to_string(),
            age,
            sex: (!is_missing_token(sex_tok)).then(|| sex_tok.to_string()),
        });

        for (j, &c) in symptom_cols.iter().enumerate() {
            let token = field(c);
            let entry = match token {
                "1" => Entry::Present,
                "0" => Entry::Absent,
                t if is_missing_token(t) => Entry::Missing,
                t => match rules[j] {
                    Some(rule) if rule.covers(t) => rule.apply(t),
                    _ => {
                        return Err(Error::UncoveredToken {
                            row,
                            column: config.taxonomy[j].id.clone(),
                            token: t.to_string(),
                        })
                    }
                },
            };
            entries.push(entry);
        }
    }
    Cohort::new(cases, config.taxonomy.clone(), entries)
}

/// Writes the post-rule binary matrix in the ingest format.
pub fn write_csv<W: Write>(cohort: &Cohort, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![CASE_ID.to_string(), AGE.to_string(), SEX.to_string()];
    header.extend(cohort.symptom_ids());
    w.write_record(&header)?;
    for (case, row) in cohort.cases().iter().zip(cohort.rows()) {
        let mut rec = vec![
            case.id.clone(),
            case.age.map_or_else(|| "NA".to_string(), |a| a.to_string()),
            case.sex.clone().unwrap_or_else(|| "NA".to_string()),
        ];
        rec.extend(row.iter().map(|e| e.token().to_string()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn export_csv(cohort: &Cohort, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_csv(cohort, std::io::BufWriter::new(file))
}

/// Configurations for the four dataset vocabularies.
pub mod shipped {
    pub const TEST_AND_TRACE: &str = include_str!("../rules/test_and_trace.conf");
    pub const CIS: &str = include_str!("../rules/cis.conf");
    pub const CSS: &str = include_str!("../rules/css.conf");

    pub fn by_name(name: &str) -> Option<&'static str> {
        match name {
            "pillar2" | "sgss" | "test_and_trace" => Some(TEST_AND_TRACE),
            "cis" => Some(CIS),
            "css" => Some(CSS),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: &str = "\
# demo
cough = lower_respiratory
fatigue = systemic   # binarized below
fatigue : none < mild < severe @ severe
";

    fn cfg() -> DatasetConfig {
        DatasetConfig::parse(CFG).unwrap()
    }

    #[test]
    fn parse_config() {
        let c = cfg();
        assert_eq!(c.taxonomy.len(), 2);
        assert_eq!(c.taxonomy[1].category, Category::Systemic);
        let r = c.rule_for("fatigue").unwrap();
        assert_eq!(r.levels, ["none", "mild", "severe"]);
        assert_eq!(r.threshold(), "severe");
        assert_eq!(DatasetConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn parse_rejects_bad_lines() {
        assert!(matches!(
            DatasetConfig::parse("cough = nasal"),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(matches!(
            DatasetConfig::parse("a = other\na : x < y @ z"),
            Err(Error::Config { line: 2, .. })
        ));
        assert!(DatasetConfig::parse("a = other\na = other").is_err());
        assert!(DatasetConfig::parse("b : x < y @ y").is_err());
        assert!(DatasetConfig::parse("just words").is_err());
    }

    #[test]
    fn fatigue_threshold_severe() {
        let r =
            BinarizationRule::new("fatigue", vec!["none".into(), "mild".into(), "severe".into()], "severe").unwrap();
        assert_eq!(r.apply("mild"), Entry::Absent);
        assert_eq!(r.apply("none"), Entry::Absent);
        assert_eq!(r.apply("severe"), Entry::Present);
        assert_eq!(r.apply("extreme"), Entry::Missing);
        assert!(BinarizationRule::new("f", vec!["a".into()], "b").is_err());
    }

    #[test]
    fn ingest_basic() {
        let csv = "case_id,age,sex,cough,fatigue\n\
                   a,34,F,1,mild\n\
                   b,NA,,0,severe\n\
                   c,70,M,1,NA\n";
        let c = ingest_reader(csv.as_bytes(), &cfg()).unwrap();
        assert_eq!(c.n_cases(), 3);
        assert_eq!(c.column(0), [Entry::Present, Entry::Absent, Entry::Present]);
        assert_eq!(c.column(1), [Entry::Absent, Entry::Present, Entry::Missing]);
        assert_eq!(c.cases()[1].age, None);
        assert_eq!(c.cases()[1].sex, None);
        assert_eq!(c.cases()[2].age, Some(70));
    }

    #[test]
    fn ingest_column_order_follows_taxonomy() {
        let csv = "fatigue,sex,cough,case_id,age\nsevere,F,0,a,1\n";
        let c = ingest_reader(csv.as_bytes(), &cfg()).unwrap();
        assert_eq!(c.symptom_ids(), ["cough", "fatigue"]);
        assert_eq!(c.row(0), [Entry::Absent, Entry::Present]);
    }

    #[test]
    fn ingest_quoted_fields() {
        let csv = "case_id,age,sex,cough,fatigue\n\"a,1\",5,\"F\",\"1\",none\n";
        let c = ingest_reader(csv.as_bytes(), &cfg()).unwrap();
        assert_eq!(c.cases()[0].id, "a,1");
        assert_eq!(c.row(0), [Entry::Present, Entry::Absent]);
    }

    #[test]
    fn ingest_errors() {
        let unknown = "case_id,age,sex,cough,fatigue,rash\na,1,F,1,none,0\n";
        match ingest_reader(unknown.as_bytes(), &cfg()) {
            Err(Error::UnknownColumn(c)) => assert_eq!(c, "rash"),
            other => panic!("{other:?}"),
        }
        let token = "case_id,age,sex,cough,fatigue\na,1,F,1,none\nb,2,F,yes,none\n";
        match ingest_reader(token.as_bytes(), &cfg()) {
            Err(Error::UncoveredToken { row, column, token }) => {
                assert_eq!((row, column.as_str(), token.as_str()), (3, "cough", "yes"));
            }
            other => panic!("{other:?}"),
        }
        let unlisted = "case_id,age,sex,cough,fatigue\na,1,F,1,extreme\n";
        assert!(matches!(
            ingest_reader(unlisted.as_bytes(), &cfg()),
            Err(Error::UncoveredToken { .. })
        ));
        let dup = "case_id,age,sex,cough,fatigue\na,1,F,1,none\na,2,F,0,none\n";
        assert!(matches!(
            ingest_reader(dup.as_bytes(), &cfg()),
            Err(Error::DuplicateCase(_))
        ));
        let no_sex = "case_id,age,cough,fatigue\na,1,1,none\n";
        assert!(matches!(
            ingest_reader(no_sex.as_bytes(), &cfg()),
            Err(Error::MissingColumn(_))
        ));
        let no_col = "case_id,age,sex,cough\na,1,F,1\n";
        assert!(matches!(
            ingest_reader(no_col.as_bytes(), &cfg()),
            Err(Error::MissingColumn(_))
        ));
        let bad_age = "case_id,age,sex,cough,fatigue\na,old,F,1,none\n";
        assert!(matches!(
            ingest_reader(bad_age.as_bytes(), &cfg()),
            Err(Error::InvalidAge { .. })
        ));
    }

    #[test]
    fn shipped_configs_parse() {
        for name in ["pillar2", "cis", "css"] {
            let cfg = DatasetConfig::parse(shipped::by_name(name).unwrap()).unwrap();
            for core in crate::CORE_SYMPTOMS {
                assert!(cfg.taxonomy.iter().any(|s| s.id == core), "{name} lacks {core}");
            }
        }
        let css = DatasetConfig::parse(shipped::CSS).unwrap();
        assert_eq!(css.taxonomy.len(), 14);
        let sob = css.rule_for("shortness_of_breath").unwrap();
        assert_eq!(sob.apply("significant"), Entry::Present);
        assert_eq!(sob.apply("severe"), Entry::Present);
        assert_eq!(sob.apply("mild"), Entry::Absent);
        assert_eq!(css.rule_for("fatigue").unwrap().apply("mild"), Entry::Absent);
    }
}
