use std::collections::HashMap;

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::layout::Layout;
use super::{fuzzy_graph, EmbedParams, Embedding};
use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};
use crate::linalg::procrustes_rotation;

/// Number of neighbouring strata each stratum is tied to.
pub const DEFAULT_WINDOW: usize = 2;

/// Default penalty weight, calibrated on stationary synthetic cohorts.
pub const DEFAULT_ALIGNMENT_STRENGTH: f64 = 0.7;

const PENALTY_CLIP: f64 = 4.0;

/// Seed for the stratum at input position `s`.
pub fn stratum_seed(seed: u64, s: usize) -> u64 {
    seed ^ (s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Shared symptoms between two embedded strata, as index pairs into each
/// stratum's labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Relation {
    pub from: usize,
    pub to: usize,
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignedEmbeddingSet {
    /// Labels of the embedded strata, in order.
    pub strata: Vec<String>,
    /// Input position of each embedded stratum.
    pub positions: Vec<usize>,
    pub embeddings: Vec<Embedding>,
    pub relations: Vec<Relation>,
    pub window: usize,
    pub alignment_strength: f64,
    /// Labels of input strata that could not be embedded.
    pub skipped: Vec<String>,
}

impl AlignedEmbeddingSet {
    /// Coordinates of `symptom` in every embedded stratum that has it.
    pub fn track(&self, symptom: &str) -> Vec<(usize, [f64; 2])> {
        self.embeddings
            .iter()
            .enumerate()
            .filter_map(|(s, e)| e.index_of(symptom).map(|i| (s, e.coords[i])))
            .collect()
    }

    /// Mean distance between the positions of shared symptoms in embedded
    /// strata `s` and `s + 1`.
    pub fn adjacent_displacement(&self, s: usize) -> Option<f64> {
        let (a, b) = (&self.embeddings[s], &self.embeddings[s + 1]);
        let mut total = 0.0;
        let mut count = 0usize;
        for (i, label) in a.labels.iter().enumerate() {
            if let Some(j) = b.index_of(label) {
                let [x0, y0] = a.coords[i];
                let [x1, y1] = b.coords[j];
                total += (x0 - x1).hypot(y0 - y1);
                count += 1;
            }
        }
        (count > 0).then(|| total / count as f64)
    }
}

fn relate(a: &[String], b: &[String], core: Option<&[String]>) -> Vec<(usize, usize)> {
    let index: HashMap<&str, usize> = b.iter().enumerate().map(|(j, l)| (l.as_str(), j)).collect();
    a.iter()
        .enumerate()
        .filter(|(_, l)| core.is_none_or(|c| c.contains(l)))
        .filter_map(|(i, l)| index.get(l.as_str()).map(|&j| (i, j)))
        .collect()
}

/// Rotates (with reflection allowed) and translates `coords` so the shared
/// points best match `target`.
fn procrustes_fit(coords: &mut [[f64; 2]], target: &[[f64; 2]], pairs: &[(usize, usize)]) {
    if pairs.is_empty() {
        return;
    }
    let n = pairs.len() as f64;
    let mean = |pts: &mut dyn Iterator<Item = [f64; 2]>| {
        let (x, y) = pts.fold((0.0, 0.0), |(x, y), p| (x + p[0], y + p[1]));
        [x / n, y / n]
    };
    let ca = mean(&mut pairs.iter().map(|&(i, _)| coords[i]));
    let cb = mean(&mut pairs.iter().map(|&(_, j)| target[j]));
    let rot = if pairs.len() >= 2 {
        let a = DMatrix::from_fn(pairs.len(), 2, |r, c| coords[pairs[r].0][c] - ca[c]);
        let b = DMatrix::from_fn(pairs.len(), 2, |r, c| target[pairs[r].1][c] - cb[c]);
        procrustes_rotation(&a, &b)
    } else {
        DMatrix::identity(2, 2)
    };
    if rot.iter().any(|v| !v.is_finite()) {
        return;
    }
    for pt in coords.iter_mut() {
        let (x, y) = (pt[0] - ca[0], pt[1] - ca[1]);
        pt[0] = x * rot[(0, 0)] + y * rot[(1, 0)] + cb[0];
        pt[1] = x * rot[(0, 1)] + y * rot[(1, 1)] + cb[1];
    }
}

/// One gradient step on `strength * sum |y_s,i - y_s',j|^2` over all
/// related pairs, computed from a snapshot so the update does not depend on
/// stratum order. The per-point step is capped so it never overshoots the
/// average of its partners.
fn penalty_step(layouts: &mut [Layout], relations: &[Relation], strength: f64, alpha: f64) {
    let mut pull: Vec<Vec<[f64; 2]>> = layouts.iter().map(|l| vec![[0.0; 2]; l.coords.len()]).collect();
    let mut count: Vec<Vec<usize>> = layouts.iter().map(|l| vec![0; l.coords.len()]).collect();
    for rel in relations {
        for &(i, j) in &rel.pairs {
            let a = layouts[rel.from].coords[i];
            let b = layouts[rel.to].coords[j];
            for d in 0..2 {
                pull[rel.from][i][d] += a[d] - b[d];
                pull[rel.to][j][d] += b[d] - a[d];
            }
            count[rel.from][i] += 1;
            count[rel.to][j] += 1;
        }
    }
    for (s, layout) in layouts.iter_mut().enumerate() {
        for (i, pt) in layout.coords.iter_mut().enumerate() {
            let c = count[s][i];
            if c == 0 {
                continue;
            }
            let factor = (alpha * 2.0 * strength).min(0.5 / c as f64);
            for d in 0..2 {
                pt[d] -= (factor * pull[s][i][d]).clamp(-PENALTY_CLIP, PENALTY_CLIP);
            }
        }
    }
}

fn joint_embed(
    strata: &[(String, DistanceMatrix)],
    window: usize,
    strength: f64,
    params: &EmbedParams,
    core: Option<&[String]>,
) -> Result<AlignedEmbeddingSet> {
    if window == 0 {
        return Err(Error::param("window must be at least 1"));
    }
    if !(strength >= 0.0 && strength.is_finite()) {
        return Err(Error::param(format!(
            "alignment strength {strength} must be non-negative"
        )));
    }

    let mut kept = Vec::new();
    let mut skipped = Vec::new();
    for (pos, (label, d)) in strata.iter().enumerate() {
        d.require_defined()?;
        if d.len() < 3 || d.len() <= params.n_neighbours {
            warn!(
                "stratum `{label}` has {} symptoms; cannot embed with n_neighbours = {}, skipping",
                d.len(),
                params.n_neighbours
            );
            skipped.push(label.clone());
            continue;
        }
        kept.push(pos);
    }

    let mut relations = Vec::new();
    for (a, &pa) in kept.iter().enumerate() {
        for (b, &pb) in kept.iter().enumerate().skip(a + 1) {
            if b - a > window {
                break;
            }
            let pairs = relate(&strata[pa].1.labels, &strata[pb].1.labels, core);
            if pairs.is_empty() {
                return Err(Error::param(format!(
                    "strata `{}` and `{}` share no symptoms",
                    strata[pa].0, strata[pb].0
                )));
            }
            relations.push(Relation { from: a, to: b, pairs });
        }
    }

    let mut stratum_params = Vec::with_capacity(kept.len());
    let mut layouts = Vec::with_capacity(kept.len());
    for &pos in &kept {
        let p = EmbedParams {
            seed: stratum_seed(params.seed, pos),
            ..params.clone()
        };
        let g = fuzzy_graph(&strata[pos].1, p.n_neighbours)?;
        layouts.push(Layout::new(&g, &p)?);
        stratum_params.push(p);
    }

    if strength > 0.0 {
        for s in 1..layouts.len() {
            if let Some(rel) = relations.iter().find(|r| r.from == s - 1 && r.to == s) {
                let flipped: Vec<(usize, usize)> = rel.pairs.iter().map(|&(i, j)| (j, i)).collect();
                let target = layouts[s - 1].coords.clone();
                procrustes_fit(&mut layouts[s].coords, &target, &flipped);
            }
        }
    }

    let n_epochs = params.n_epochs;
    for n in 0..n_epochs {
        for layout in layouts.iter_mut() {
            layout.epoch(n)?;
        }
        if strength > 0.0 && !layouts.is_empty() {
            let alpha = layouts[0].alpha(n);
            penalty_step(&mut layouts, &relations, strength, alpha);
        }
    }

    let embeddings = layouts
        .into_iter()
        .zip(&kept)
        .zip(stratum_params)
        .map(|((layout, &pos), p)| Embedding {
            labels: strata[pos].1.labels.clone(),
            coords: layout.coords,
            seed: p.seed,
            params: p,
            init: layout.init,
        })
        .collect();
    Ok(AlignedEmbeddingSet {
        strata: kept.iter().map(|&pos| strata[pos].0.clone()).collect(),
        positions: kept,
        embeddings,
        relations,
        window,
        alignment_strength: strength,
        skipped,
    })
}

/// Jointly embeds ordered strata, each under its own UMAP objective, plus
/// `strength` times the squared distance between a symptom's positions in
/// strata at most `window` apart. Stratum `s` uses seed
/// [`stratum_seed`]`(params.seed, s)`, so strength 0 reproduces independent
/// embeddings exactly.
pub fn aligned_embed(
    strata: &[(String, DistanceMatrix)],
    window: usize,
    strength: f64,
    params: &EmbedParams,
) -> Result<AlignedEmbeddingSet> {
    joint_embed(strata, window, strength, params, None)
}

/// Aligns embeddings of datasets with different symptom sets, tying only
/// the `core` symptoms; every dataset is related to every other.
pub fn align_datasets(
    datasets: &[(String, DistanceMatrix)],
    core: &[String],
    strength: f64,
    params: &EmbedParams,
) -> Result<AlignedEmbeddingSet> {
    if core.len() < 3 {
        return Err(Error::param(format!(
            "core needs at least 3 symptoms, got {}",
            core.len()
        )));
    }
    for (name, d) in datasets {
        if let Some(missing) = core.iter().find(|c| d.index_of(c).is_none()) {
            return Err(Error::MissingCore {
                symptom: missing.clone(),
                dataset: name.clone(),
            });
        }
    }
    joint_embed(datasets, datasets.len().max(1), strength, params, Some(core))
}
