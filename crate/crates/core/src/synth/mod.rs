//! Synthetic cohorts with planted logistic factor structure.
//!
//! Each case draws latents `(s, t)` from independent normals scaled by the
//! factor scales; symptom `a` is present with probability
//! `sigmoid(offset[a] + s * U[a][0] + t * U[a][1])`, where `U` is the planted
//! loading matrix with orthonormalized columns. Entries are then masked
//! missing at random.

pub mod presets;

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::{CaseRecord, Category, Cohort, Entry, SymptomDef};
use crate::error::{Error, Result};
use crate::linalg;
use crate::lpca::sigmoid;
use crate::strata::{stratify, AgeBand, StratificationScheme, Stratum};

/// Loadings used for cases whose age falls in `band`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadingOverride {
    pub band: AgeBand,
    /// `p` rows of (severity, phenotype) loadings, used as given.
    pub loadings: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n: usize,
    pub symptoms: Vec<SymptomDef>,
    /// `p` rows of (severity, phenotype) loadings; columns are
    /// orthonormalized before use.
    pub loadings: Vec<[f64; 2]>,
    pub offsets: Vec<f64>,
    pub factor_scales: [f64; 2],
    /// Ages are drawn uniformly from this inclusive range.
    pub age_range: (u32, u32),
    pub overrides: Vec<LoadingOverride>,
    pub missing_rate: f64,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn p(&self) -> usize {
        self.symptoms.len()
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.p();
        if p == 0 || self.loadings.len() != p || self.offsets.len() != p {
            return Err(Error::Shape(format!(
                "{p} symptoms, {} loading rows, {} offsets",
                self.loadings.len(),
                self.offsets.len()
            )));
        }
        if !(0.0..0.5).contains(&self.missing_rate) {
            return Err(Error::param(format!(
                "missing rate {} not in [0, 0.5)",
                self.missing_rate
            )));
        }
        if self.factor_scales.iter().any(|&s| !(s >= 0.0 && s.is_finite())) {
            return Err(Error::param("factor scales must be non-negative"));
        }
        if self.age_range.0 > self.age_range.1 {
            return Err(Error::param("empty age range"));
        }
        if self.overrides.iter().any(|o| o.loadings.len() != p) {
            return Err(Error::Shape("override loadings must have p rows".into()));
        }
        Ok(())
    }

    /// Planted loadings with orthonormal columns, signed to agree with the
    /// raw columns.
    pub fn orthonormal_loadings(&self) -> Result<Vec<[f64; 2]>> {
        let p = self.p();
        let raw = DMatrix::from_fn(p, 2, |i, j| self.loadings[i][j]);
        let q = linalg::orthonormalize(&raw)?;
        Ok((0..p).map(|i| [q[(i, 0)], q[(i, 1)]]).collect())
    }
}

/// Everything needed to recompute each entry probability exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Scaled latents `(s, t)` per case.
    pub latents: Vec<[f64; 2]>,
    pub loadings: Vec<[f64; 2]>,
    pub offsets: Vec<f64>,
    pub overrides: Vec<LoadingOverride>,
    /// Index into `overrides` used by each case, if any.
    pub override_of_case: Vec<Option<usize>>,
}

impl GroundTruth {
    fn loading_row(&self, case: usize, a: usize) -> [f64; 2] {
        match self.override_of_case[case] {
            Some(o) => self.overrides[o].loadings[a],
            None => self.loadings[a],
        }
    }

    pub fn logit(&self, case: usize, a: usize) -> f64 {
        let [s, t] = self.latents[case];
        let [u1, u2] = self.loading_row(case, a);
        self.offsets[a] + s * u1 + t * u2
    }

    pub fn probability(&self, case: usize, a: usize) -> f64 {
        sigmoid(self.logit(case, a))
    }

    /// Planted loadings as a `p x 2` matrix.
    pub fn loading_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.loadings.len(), 2, |i, j| self.loadings[i][j])
    }
}

fn case_record(i: usize, age: u32, rng: &mut ChaCha8Rng) -> CaseRecord {
    CaseRecord {
        id: format!("case{i:06}"),
        age: Some(age),
        sex: Some(if rng.random_bool(0.55) { "F" } else { "M" }.to_string()),
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<(Cohort, GroundTruth)> {
    spec.validate()?;
    let p = spec.p();
    let loadings = spec.orthonormal_loadings()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut truth = GroundTruth {
        latents: Vec::with_capacity(spec.n),
        loadings,
        offsets: spec.offsets.clone(),
        overrides: spec.overrides.clone(),
        override_of_case: Vec::with_capacity(spec.n),
    };
    let mut cases = Vec::with_capacity(spec.n);
    let mut entries = Vec::with_capacity(spec.n * p);
    for i in 0..spec.n {
        let age = rng.random_range(spec.age_range.0..=spec.age_range.1);
        cases.push(case_record(i, age, &mut rng));
        let s: f64 = StandardNormal.sample(&mut rng);
        let t: f64 = StandardNormal.sample(&mut rng);
        truth
            .latents
            .push([s * spec.factor_scales[0], t * spec.factor_scales[1]]);
        truth
            .override_of_case
            .push(spec.overrides.iter().position(|o| o.band.contains(age)));
        for a in 0..p {
            let present = rng.random::<f64>() < truth.probability(i, a);
            let missing = spec.missing_rate > 0.0 && rng.random::<f64>() < spec.missing_rate;
            entries.push(if missing {
                Entry::Missing
            } else {
                Entry::from_bool(present)
            });
        }
    }
    let cohort = Cohort::new(cases, spec.symptoms.clone(), entries)?;
    Ok((cohort, truth))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TwoClusterSpec {
    pub p: usize,
    pub n: usize,
    /// Size of the first block; the second holds the rest.
    pub first_block: usize,
    pub within_prob: f64,
    pub between_prob: f64,
    pub seed: u64,
}

impl TwoClusterSpec {
    pub fn new(p: usize, n: usize, within_prob: f64, between_prob: f64, seed: u64) -> Self {
        TwoClusterSpec {
            p,
            n,
            first_block: p / 2,
            within_prob,
            between_prob,
            seed,
        }
    }

    pub fn block_of(&self, symptom: usize) -> usize {
        usize::from(symptom >= self.first_block)
    }
}

/// Two symptom blocks. Each case activates one block (chosen with equal
/// probability); symptoms in the active block are present with
/// `within_prob`, all others with `between_prob`.
pub fn generate_two_cluster(spec: &TwoClusterSpec) -> Result<Cohort> {
    if spec.within_prob <= spec.between_prob {
        return Err(Error::param("within_prob must exceed between_prob"));
    }
    for q in [spec.within_prob, spec.between_prob] {
        if !(0.0..=1.0).contains(&q) {
            return Err(Error::param(format!("probability {q} outside [0, 1]")));
        }
    }
    if spec.first_block == 0 || spec.first_block >= spec.p {
        return Err(Error::param("both blocks need at least one symptom"));
    }
    let symptoms: Vec<SymptomDef> = (0..spec.p)
        .map(|j| {
            let name = match spec.block_of(j) {
                0 => format!("a{j:02}"),
                _ => format!("b{j:02}"),
            };
            SymptomDef::new(name, Category::Other)
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut cases = Vec::with_capacity(spec.n);
    let mut entries = Vec::with_capacity(spec.n * spec.p);
    for i in 0..spec.n {
        let age = rng.random_range(0..=89);
        cases.push(case_record(i, age, &mut rng));
        let active = usize::from(rng.random_bool(0.5));
        for j in 0..spec.p {
            let q = if spec.block_of(j) == active {
                spec.within_prob
            } else {
                spec.between_prob
            };
            entries.push(Entry::from_bool(rng.random::<f64>() < q));
        }
    }
    Cohort::new(cases, symptoms, entries)
}

#[derive(Clone, Debug)]
pub struct AgeRegimeCohort {
    pub cohort: Cohort,
    pub truth: GroundTruth,
    pub strata: Vec<Stratum>,
    /// Indices of the gastrointestinal symptoms.
    pub block: Vec<usize>,
}

/// Generates a cohort over the scheme's age range in which the
/// gastrointestinal symptoms of the oldest stratum move from the severity
/// latent to the phenotype latent: their scaled logit effects
/// `(scale_0 u_0, scale_1 u_1)` are rotated by `min(strength, 1) * 90`
/// degrees. At full strength the block keeps its effect size but follows
/// the phenotype latent, which the other symptoms load on only weakly.
pub fn generate_age_regime(
    base: &GeneratorSpec,
    strength: f64,
    scheme: &StratificationScheme,
) -> Result<AgeRegimeCohort> {
    if !(strength >= 0.0) {
        return Err(Error::param(format!("decoupling strength {strength} < 0")));
    }
    scheme.validate()?;
    let bands = scheme.bands();
    let oldest = *bands.last().expect("validated scheme has bands");
    let lo = bands[0].lo;
    let hi = oldest.hi.map_or(oldest.lo + 9, |h| h - 1);

    let block: Vec<usize> = base
        .symptoms
        .iter()
        .enumerate()
        .filter(|(_, s)| s.category == Category::Gastrointestinal)
        .map(|(i, _)| i)
        .collect();
    let mut spec = base.clone();
    spec.age_range = (lo, hi);
    spec.overrides.clear();
    if strength > 0.0 {
        let [s1, s2] = base.factor_scales;
        if !(s1 > 0.0 && s2 > 0.0) {
            return Err(Error::param("decoupling needs both factor scales positive"));
        }
        let angle = strength.min(1.0) * FRAC_PI_2;
        let (sin, cos) = angle.sin_cos();
        let mut rotated = base.orthonormal_loadings()?;
        for &a in &block {
            // rotate the per-symptom logit effect (s1 u1, s2 u2)
            let (e1, e2) = (s1 * rotated[a][0], s2 * rotated[a][1]);
            rotated[a] = [(e1 * cos - e2 * sin) / s1, (e1 * sin + e2 * cos) / s2];
        }
        spec.overrides.push(LoadingOverride {
            band: oldest,
            loadings: rotated,
        });
    }
    let (cohort, truth) = generate(&spec)?;
    let strata = stratify(&cohort, scheme)?;
    Ok(AgeRegimeCohort {
        cohort,
        truth,
        strata,
        block,
    })
}

/// Planted rank-2 spec: a uniform severity column and a contrast column
/// splitting the symptoms into two halves.
pub fn rank_two_spec(n: usize, p: usize, scales: [f64; 2], seed: u64) -> GeneratorSpec {
    let symptoms = (0..p)
        .map(|j| SymptomDef::new(format!("s{j:02}"), Category::Other))
        .collect();
    let loadings = (0..p)
        .map(|j| {
            let contrast = if j < p / 2 { 1.0 } else { -1.0 };
            // mild variation keeps the severity column from being exactly flat
            [1.0 + 0.3 * ((j % 3) as f64 - 1.0), contrast]
        })
        .collect();
    // offsets spread frequencies between roughly 0.2 and 0.5
    let offsets = (0..p).map(|j| -1.4 + 1.2 * (j % 5) as f64 / 4.0).collect();
    GeneratorSpec {
        n,
        symptoms,
        loadings,
        offsets,
        factor_scales: scales,
        age_range: (0, 89),
        overrides: Vec::new(),
        missing_rate: 0.0,
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let spec = rank_two_spec(200, 6, [2.0, 1.0], 9);
        let (a, ta) = generate(&spec).unwrap();
        let (b, tb) = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let other = GeneratorSpec { seed: 10, ..spec };
        assert_ne!(generate(&other).unwrap().0, a);
    }

    #[test]
    fn degenerate_factors_give_independent_bernoulli() {
        let mut spec = rank_two_spec(20_000, 5, [0.0, 0.0], 4);
        spec.offsets = vec![-2.0, -1.0, 0.0, 0.5, 1.5];
        let (c, _) = generate(&spec).unwrap();
        for (j, &o) in spec.offsets.iter().enumerate() {
            let q = sigmoid(o);
            let mean = c.column(j).iter().filter(|e| e.is_present()).count() as f64 / c.n_cases() as f64;
            let se = (q * (1.0 - q) / c.n_cases() as f64).sqrt();
            assert!((mean - q).abs() < 3.0 * se, "col {j}: {mean} vs {q}");
        }
    }

    #[test]
    fn truth_recomputes_probabilities() {
        let spec = rank_two_spec(50, 4, [1.5, 0.5], 1);
        let (_, truth) = generate(&spec).unwrap();
        let l = spec.orthonormal_loadings().unwrap();
        let [s, t] = truth.latents[3];
        let expected = sigmoid(spec.offsets[2] + s * l[2][0] + t * l[2][1]);
        assert_eq!(truth.probability(3, 2).to_bits(), expected.to_bits());
    }

    #[test]
    fn missing_rate_applied() {
        let mut spec = rank_two_spec(4000, 5, [1.0, 1.0], 2);
        spec.missing_rate = 0.2;
        let (c, _) = generate(&spec).unwrap();
        let frac = c.entries().iter().filter(|e| !e.is_observed()).count() as f64 / (4000.0 * 5.0);
        assert!((frac - 0.2).abs() < 0.01);
        spec.missing_rate = 0.5;
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn orthonormalized_loadings() {
        let spec = rank_two_spec(1, 8, [1.0, 1.0], 0);
        let l = spec.orthonormal_loadings().unwrap();
        let m = DMatrix::from_fn(8, 2, |i, j| l[i][j]);
        assert!(linalg::orthonormality_error(&m) < 1e-12);
        assert!(l.iter().all(|r| r[0] > 0.0));
    }

    #[test]
    fn two_cluster_guards_and_degenerate_blocks() {
        assert!(generate_two_cluster(&TwoClusterSpec::new(6, 10, 0.3, 0.3, 1)).is_err());
        let mut spec = TwoClusterSpec::new(6, 100, 0.6, 0.05, 1);
        spec.first_block = 1;
        let c = generate_two_cluster(&spec).unwrap();
        assert_eq!(c.n_symptoms(), 6);
        assert_eq!(c.symptoms()[0].id, "a00");
        assert_eq!(c.symptoms()[1].id, "b01");
    }

    #[test]
    fn age_regime_overrides_oldest_only() {
        let base = presets::preset("cis", 3000, 5).unwrap();
        let r = generate_age_regime(&base, 1.0, &StratificationScheme::Broad).unwrap();
        assert_eq!(r.strata.len(), 3);
        assert_eq!(r.block.len(), 3);
        for (i, case) in r.cohort.cases().iter().enumerate() {
            let old = case.age.unwrap() >= 55;
            assert_eq!(r.truth.override_of_case[i].is_some(), old);
        }
        let flat = generate_age_regime(&base, 0.0, &StratificationScheme::Broad).unwrap();
        assert!(flat.truth.overrides.is_empty());
        assert!(generate_age_regime(&base, -1.0, &StratificationScheme::Broad).is_err());
    }
}
