//! Jaccard distances between symptom columns under pairwise deletion.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, Entry};
use crate::error::{Error, Result};

/// Outcome of a single Jaccard comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Jaccard {
    Defined(f64),
    /// Neither symptom is present among the jointly observed cases.
    NoSupport,
}

impl Jaccard {
    pub fn value(self) -> Option<f64> {
        match self {
            Jaccard::Defined(d) => Some(d),
            Jaccard::NoSupport => None,
        }
    }
}

fn from_counts(both: usize, either: usize) -> Jaccard {
    if either == 0 {
        Jaccard::NoSupport
    } else {
        Jaccard::Defined(1.0 - both as f64 / either as f64)
    }
}

/// Distance and support (number of cases observed for both symptoms).
pub fn jaccard_pair(a: &[Entry], b: &[Entry]) -> Result<(Jaccard, usize)> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("columns of length {} and {}", a.len(), b.len())));
    }
    let (mut both, mut either, mut support) = (0, 0, 0);
    for (&x, &y) in a.iter().zip(b) {
        if !x.is_observed() || !y.is_observed() {
            continue;
        }
        support += 1;
        match (x.is_present(), y.is_present()) {
            (true, true) => {
                both += 1;
                either += 1;
            }
            (true, false) | (false, true) => either += 1,
            (false, false) => {}
        }
    }
    Ok((from_counts(both, either), support))
}

/// Symmetric `p x p` Jaccard distances with pair-support counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub labels: Vec<String>,
    /// Row-major; `None` where the distance is undefined.
    #[serde(rename = "D")]
    values: Vec<Option<f64>>,
    /// Row-major.
    support: Vec<usize>,
    /// Undefined off-diagonal pairs `(a, b)` with `a < b`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<(usize, usize)>,
}

impl DistanceMatrix {
    /// Fully defined matrix from dense values; support is left at zero.
    pub fn from_dense(labels: Vec<String>, d: &[Vec<f64>]) -> Result<Self> {
        let p = labels.len();
        if d.len() != p || d.iter().any(|r| r.len() != p) {
            return Err(Error::Shape(format!("distance matrix is not {p} x {p}")));
        }
        for a in 0..p {
            for b in 0..p {
                let v = d[a][b];
                if !v.is_finite() || v < 0.0 || d[b][a] != v {
                    return Err(Error::param(format!("invalid distance at ({a}, {b})")));
                }
            }
        }
        Ok(DistanceMatrix {
            labels,
            values: d.iter().flatten().map(|&v| Some(v)).collect(),
            support: vec![0; p * p],
            undefined: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize) -> Option<f64> {
        self.values[a * self.len() + b]
    }

    /// Value for matrices already checked with [`require_defined`](Self::require_defined).
    #[inline]
    pub fn at(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.len() + b].unwrap_or(f64::NAN)
    }

    pub fn support(&self, a: usize, b: usize) -> usize {
        self.support[a * self.len() + b]
    }

    pub fn is_embeddable(&self) -> bool {
        self.undefined.is_empty()
    }

    pub fn require_defined(&self) -> Result<()> {
        if self.is_embeddable() {
            Ok(())
        } else {
            Err(Error::UndefinedDistances(self.undefined.len()))
        }
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|a| (0..self.len()).map(|b| self.at(a, b)).collect())
            .collect()
    }

    /// Reorders rows and columns; `order[i]` is the old index placed at `i`.
    pub fn permuted(&self, order: &[usize]) -> DistanceMatrix {
        let p = self.len();
        let mut values = Vec::with_capacity(p * p);
        let mut support = Vec::with_capacity(p * p);
        for &a in order {
            for &b in order {
                values.push(self.get(a, b));
                support.push(self.support(a, b));
            }
        }
        let pos: Vec<usize> = {
            let mut pos = vec![0; p];
            for (i, &o) in order.iter().enumerate() {
                pos[o] = i;
            }
            pos
        };
        let mut undefined: Vec<(usize, usize)> = self
            .undefined
            .iter()
            .map(|&(a, b)| (pos[a].min(pos[b]), pos[a].max(pos[b])))
            .collect();
        undefined.sort_unstable();
        DistanceMatrix {
            labels: order.iter().map(|&i| self.labels[i].clone()).collect(),
            values,
            support,
            undefined,
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![String::new()];
        header.extend(self.labels.iter().cloned());
        w.write_record(&header)?;
        for a in 0..self.len() {
            let mut rec = vec![self.labels[a].clone()];
            rec.extend((0..self.len()).map(|b| match self.get(a, b) {
                Some(v) => format!("{v}"),
                None => "NA".to_string(),
            }));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<csv writer>", e))?;
        Ok(())
    }
}

struct BitColumn {
    present: Vec<u64>,
    observed: Vec<u64>,
}

impl BitColumn {
    fn new(col: impl Iterator<Item = Entry>, n: usize) -> Self {
        let words = n.div_ceil(64);
        let mut present = vec![0u64; words];
        let mut observed = vec![0u64; words];
        for (i, e) in col.enumerate() {
            let (w, bit) = (i / 64, 1u64 << (i % 64));
            if e.is_observed() {
                observed[w] |= bit;
            }
            if e.is_present() {
                present[w] |= bit;
            }
        }
        BitColumn { present, observed }
    }

    fn compare(&self, other: &BitColumn) -> (usize, usize, usize) {
        let (mut both, mut either, mut support) = (0, 0, 0);
        for w in 0..self.present.len() {
            let joint = self.observed[w] & other.observed[w];
            both += (self.present[w] & other.present[w] & joint).count_ones() as usize;
            either += ((self.present[w] | other.present[w]) & joint).count_ones() as usize;
            support += joint.count_ones() as usize;
        }
        (both, either, support)
    }
}

/// All pairwise distances. Undefined off-diagonal pairs are listed in
/// [`DistanceMatrix::undefined`]; a symptom undefined against every other
/// symptom is a hard error.
pub fn jaccard_matrix(cohort: &Cohort) -> Result<DistanceMatrix> {
    let p = cohort.n_symptoms();
    if p < 2 {
        return Err(Error::param(format!("need at least 2 symptoms, got {p}")));
    }
    if !cohort.is_symptomatic() {
        log::warn!("jaccard matrix computed on a cohort that is not symptomatic-filtered");
    }
    let n = cohort.n_cases();
    let cols: Vec<BitColumn> = (0..p)
        .map(|j| BitColumn::new((0..n).map(|i| cohort.get(i, j)), n))
        .collect();

    let pairs: Vec<(usize, usize)> = (0..p).flat_map(|a| (a..p).map(move |b| (a, b))).collect();
    let results: Vec<(Jaccard, usize)> = pairs
        .par_iter()
        .map(|&(a, b)| {
            let (both, either, support) = cols[a].compare(&cols[b]);
            (from_counts(both, either), support)
        })
        .collect();

    let mut values = vec![None; p * p];
    let mut support = vec![0; p * p];
    let mut undefined = Vec::new();
    for (&(a, b), &(d, s)) in pairs.iter().zip(&results) {
        values[a * p + b] = d.value();
        values[b * p + a] = d.value();
        support[a * p + b] = s;
        support[b * p + a] = s;
        if a != b && d == Jaccard::NoSupport {
            undefined.push((a, b));
        }
    }
    let labels = cohort.symptom_ids();
    for a in 0..p {
        if (0..p).filter(|&b| b != a).all(|b| values[a * p + b].is_none()) {
            return Err(Error::UndefinedRow(labels[a].clone()));
        }
    }
    for &(a, b) in &undefined {
        log::warn!("no support for jaccard({}, {})", labels[a], labels[b]);
    }
    Ok(DistanceMatrix {
        labels,
        values,
        support,
        undefined,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort::test_util::cohort_from_rows;

    fn col(v: &[i8]) -> Vec<Entry> {
        v.iter()
            .map(|&x| match x {
                1 => Entry::Present,
                0 => Entry::Absent,
                _ => Entry::Missing,
            })
            .collect()
    }

    #[test]
    fn pair_two_thirds() {
        let (d, s) = jaccard_pair(&col(&[1, 1, 0, 0]), &col(&[1, 0, 1, 0])).unwrap();
        assert_eq!(d, Jaccard::Defined(1.0 - 1.0 / 3.0));
        assert_eq!(s, 4);
    }

    #[test]
    fn pair_with_missing() {
        let (d, s) = jaccard_pair(&col(&[1, 1, 0, -1]), &col(&[1, -1, 0, 1])).unwrap();
        assert_eq!(d, Jaccard::Defined(0.0));
        assert_eq!(s, 2);
    }

    #[test]
    fn pair_identity_and_no_support() {
        let a = col(&[1, 0, 1]);
        assert_eq!(jaccard_pair(&a, &a).unwrap().0, Jaccard::Defined(0.0));
        let z = col(&[0, 0, -1]);
        assert_eq!(jaccard_pair(&z, &col(&[0, -1, 1])).unwrap().0, Jaccard::NoSupport);
        assert!(jaccard_pair(&a, &z[..2]).is_err());
    }

    #[test]
    fn matrix_disjoint_and_cooccurring() {
        let c = cohort_from_rows(&[&[1, 0, 1], &[0, 1, 0], &[1, 0, 1]]);
        let d = jaccard_matrix(&c).unwrap();
        assert_eq!(d.get(0, 1), Some(1.0));
        assert_eq!(d.get(0, 2), Some(0.0));
        assert_eq!(d.get(1, 1), Some(0.0));
        assert!(d.is_embeddable());
        assert_eq!(d.support(0, 1), 3);
    }

    #[test]
    fn matrix_flags_undefined_pairs_and_rows() {
        // s0 and s2 are jointly observed only where both are absent
        let c = cohort_from_rows(&[&[1, 1, -1], &[0, 1, 0], &[1, 0, -1], &[0, 0, 0]]);
        let d = jaccard_matrix(&c).unwrap();
        assert_eq!(d.get(0, 2), None);
        assert_eq!(d.undefined, [(0, 2)]);
        assert!(d.require_defined().is_err());
        assert!(d.get(1, 2).is_some());

        let c = cohort_from_rows(&[&[1, 1, -1], &[0, 0, 0]]);
        assert!(matches!(jaccard_matrix(&c), Err(Error::UndefinedRow(s)) if s == "s2"));
    }

    #[test]
    fn matrix_needs_two_symptoms() {
        let c = cohort_from_rows(&[&[1], &[1]]);
        assert!(jaccard_matrix(&c).is_err());
    }

    #[test]
    fn permuted_relabels() {
        let c = cohort_from_rows(&[&[1, 0, 1], &[0, 1, 1], &[1, 1, 0]]);
        let d = jaccard_matrix(&c).unwrap();
        let q = d.permuted(&[2, 0, 1]);
        assert_eq!(q.labels, ["s2", "s0", "s1"]);
        assert_eq!(q.get(0, 1), d.get(2, 0));
        assert_eq!(q.get(1, 2), d.get(0, 1));
    }

    #[test]
    fn from_dense_validates() {
        let l = vec!["a".to_string(), "b".to_string()];
        assert!(DistanceMatrix::from_dense(l.clone(), &[vec![0.0, 1.0], vec![2.0, 0.0]]).is_err());
        assert!(DistanceMatrix::from_dense(l.clone(), &[vec![0.0, 1.0]]).is_err());
        let d = DistanceMatrix::from_dense(l, &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(d.at(0, 1), 1.0);
    }

    #[test]
    fn json_and_csv_export() {
        let c = cohort_from_rows(&[&[1, 0], &[1, 1]]);
        let d = jaccard_matrix(&c).unwrap();
        let json = serde_json::to_value(&d).unwrap();
        assert_eq!(json["D"], serde_json::json!([0.0, 0.5, 0.5, 0.0]));
        assert_eq!(json["support"], serde_json::json!([2, 2, 2, 2]));
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), ",s0,s1\ns0,0,0.5\ns1,0.5,0\n");
    }
}
