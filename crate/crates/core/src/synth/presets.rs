//! Generator presets inspired by the four dataset vocabularies.
//!
//! Symptom lists and categories follow the shipped rule files. Offsets and
//! the severity scale were solved numerically so that the symptomatic share
//! and per-symptom frequencies among symptomatic cases land near published
//! summary figures. They do not reproduce any real data.

use crate::error::{Error, Result};
use crate::ingest::{shipped, DatasetConfig};

use super::GeneratorSpec;

pub const PRESET_NAMES: [&str; 4] = ["pillar2", "sgss", "css", "cis"];

const PHENOTYPE_SCALE: f64 = 1.5;

struct Preset {
    config: &'static str,
    severity_scale: f64,
    /// Phenotype (second) loading column before orthonormalization.
    phenotype: &'static [f64],
    offsets: &'static [f64],
    age_range: (u32, u32),
}

const TT_PHENOTYPE: [f64; 18] = [
    0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, -0.5, 1.0, 0.0, -1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.5, -1.0,
];

fn lookup(name: &str) -> Option<Preset> {
    let p = match name {
        "cis" => Preset {
            config: shipped::CIS,
            severity_scale: 11.585,
            phenotype: &[-1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, -1.0, 0.0, 0.5],
            offsets: &[
                -6.793, -3.973, -6.380, -3.973, -4.904, -3.712, -4.769, -4.769, -4.563, -6.509, -5.375, -4.393,
            ],
            age_range: (2, 89),
        },
        "css" => Preset {
            config: shipped::CSS,
            severity_scale: 6.172,
            phenotype: &[-1.0, 1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.5, -0.5, 0.0, 0.0, 0.5],
            offsets: &[
                -2.408, -0.385, -1.844, -0.725, -3.326, -2.408, -0.465, -1.580, 0.341, -2.328, -1.600, -1.277, -4.224,
                -0.898,
            ],
            age_range: (18, 89),
        },
        "pillar2" => Preset {
            config: shipped::TEST_AND_TRACE,
            severity_scale: 5.620,
            phenotype: &TT_PHENOTYPE,
            offsets: &[
                -4.858, -0.371, -2.555, -0.371, -1.392, -0.371, -2.046, -1.526, -1.158, -1.114, -2.555, -4.858, -4.858,
                -1.764, -5.590, -1.764, -1.125, -3.972,
            ],
            age_range: (0, 79),
        },
        "sgss" => Preset {
            config: shipped::TEST_AND_TRACE,
            severity_scale: 9.619,
            phenotype: &TT_PHENOTYPE,
            offsets: &[
                -6.590, -1.383, -3.869, -1.383, -2.531, -1.383, -3.297, -2.684, -2.257, -2.211, -3.869, -6.590, -6.590,
                -2.948, -7.408, -2.948, -2.222, -5.528,
            ],
            age_range: (0, 99),
        },
        _ => return None,
    };
    Some(p)
}

pub fn preset_config(name: &str) -> Result<DatasetConfig> {
    let p = lookup(name).ok_or_else(|| Error::param(format!("unknown preset `{name}`")))?;
    DatasetConfig::parse(p.config)
}

/// Generator spec for a named preset with `n` cases.
pub fn preset(name: &str, n: usize, seed: u64) -> Result<GeneratorSpec> {
    let p = lookup(name).ok_or_else(|| Error::param(format!("unknown preset `{name}`")))?;
    let config = DatasetConfig::parse(p.config)?;
    let loadings = p.phenotype.iter().map(|&ph| [1.0, ph]).collect();
    Ok(GeneratorSpec {
        n,
        symptoms: config.taxonomy,
        loadings,
        offsets: p.offsets.to_vec(),
        factor_scales: [p.severity_scale, PHENOTYPE_SCALE],
        age_range: p.age_range,
        overrides: Vec::new(),
        missing_rate: 0.0,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::{filter_symptomatic, symptom_frequencies};
    use crate::synth::generate;

    #[test]
    fn presets_are_consistent() {
        for name in PRESET_NAMES {
            let spec = preset(name, 10, 0).unwrap();
            spec.validate().unwrap();
        }
        assert!(preset("ons", 10, 0).is_err());
    }

    #[test]
    fn css_preset_frequencies() {
        let (c, _) = generate(&preset("css", 20_000, 3).unwrap()).unwrap();
        let (s, report) = filter_symptomatic(&c).unwrap();
        assert!((report.retained_fraction() - 0.845).abs() < 0.02);
        let f = symptom_frequencies(&s);
        let headache = f.iter().find(|f| f.id == "headache").unwrap();
        assert!((headache.proportion.unwrap() - 0.66).abs() < 0.03);
    }
}
