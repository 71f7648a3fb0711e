use serde::{Deserialize, Serialize};

use crate::distance::DistanceMatrix;
use crate::error::{Error, Result};

const BANDWIDTH_TOL: f64 = 1e-5;
const BANDWIDTH_ITERS: usize = 256;

/// Weighted neighbour graph over the symptoms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FuzzyGraph {
    pub labels: Vec<String>,
    /// Directed membership strengths, `directed[i][j]` from `i` to `j`.
    pub directed: Vec<Vec<f64>>,
    /// Fuzzy union `u + v - u v` of the directed strengths.
    pub weights: Vec<Vec<f64>>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
    pub n_neighbours: usize,
    /// Nodes whose bandwidth could not reach the target because too many
    /// neighbours tie at the nearest distance; their tied edges keep
    /// weight 1.
    pub saturated: Vec<usize>,
}

impl FuzzyGraph {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Connected components over positive weights, each sorted, ordered by
    /// smallest member.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let p = self.len();
        let mut comp = vec![usize::MAX; p];
        let mut out = Vec::new();
        for start in 0..p {
            if comp[start] != usize::MAX {
                continue;
            }
            let id = out.len();
            let mut members = vec![start];
            comp[start] = id;
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                for j in 0..p {
                    if self.weights[i][j] > 0.0 && comp[j] == usize::MAX {
                        comp[j] = id;
                        members.push(j);
                        stack.push(j);
                    }
                }
            }
            members.sort_unstable();
            out.push(members);
        }
        out
    }
}

fn membership(d: f64, rho: f64, sigma: f64) -> f64 {
    let gap = d - rho;
    if gap <= 0.0 {
        1.0
    } else {
        (-gap / sigma).exp()
    }
}

/// Finds `sigma` with `sum_j exp(-max(0, d_j - rho) / sigma) = target` by
/// bisection. Returns `None` when the tied-at-rho neighbours alone exceed
/// the target.
fn solve_sigma(dists: &[f64], rho: f64, target: f64) -> Option<(f64, bool)> {
    let psum = |sigma: f64| dists.iter().map(|&d| membership(d, rho, sigma)).sum::<f64>();
    let floor = dists.iter().filter(|&&d| d <= rho).count() as f64;
    if floor > target + BANDWIDTH_TOL {
        return None;
    }
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..BANDWIDTH_ITERS {
        let s = psum(mid);
        if (s - target).abs() < BANDWIDTH_TOL {
            return Some((mid, true));
        }
        if s > target {
            hi = mid;
            mid = 0.5 * (lo + hi);
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { 0.5 * (lo + hi) };
        }
    }
    Some((mid, (psum(mid) - target).abs() < BANDWIDTH_TOL))
}

/// Builds the fuzzy neighbour graph: each node's `n_neighbours` nearest
/// other nodes get strength `exp(-max(0, d - rho) / sigma)`, with `rho` the
/// nearest distance and `sigma` calibrated so the strengths sum to
/// `log2(n_neighbours)`. Directed strengths are symmetrized by fuzzy union.
pub fn fuzzy_graph(d: &DistanceMatrix, n_neighbours: usize) -> Result<FuzzyGraph> {
    let p = d.len();
    if n_neighbours < 2 || n_neighbours >= p {
        return Err(Error::param(format!(
            "n_neighbours = {n_neighbours} must satisfy 2 <= n_neighbours < p = {p}"
        )));
    }
    d.require_defined()?;
    let target = (n_neighbours as f64).log2();

    let mut directed = vec![vec![0.0; p]; p];
    let mut rho = vec![0.0; p];
    let mut sigma = vec![0.0; p];
    let mut saturated = Vec::new();
    for i in 0..p {
        let mut others: Vec<usize> = (0..p).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| d.at(i, a).total_cmp(&d.at(i, b)).then(a.cmp(&b)));
        others.truncate(n_neighbours);
        let dists: Vec<f64> = others.iter().map(|&j| d.at(i, j)).collect();
        rho[i] = dists[0];
        sigma[i] = match solve_sigma(&dists, rho[i], target) {
            Some((s, true)) => s,
            Some((_, false)) => return Err(Error::Bandwidth { node: i }),
            None => {
                saturated.push(i);
                0.0
            }
        };
        for (&j, &dist) in others.iter().zip(&dists) {
            directed[i][j] = if sigma[i] > 0.0 {
                membership(dist, rho[i], sigma[i])
            } else if dist <= rho[i] {
                1.0
            } else {
                0.0
            };
        }
    }

    let weights = (0..p)
        .map(|i| {
            (0..p)
                .map(|j| {
                    let (u, v) = (directed[i][j], directed[j][i]);
                    u + v - u * v
                })
                .collect()
        })
        .collect();
    Ok(FuzzyGraph {
        labels: d.labels.clone(),
        directed,
        weights,
        rho,
        sigma,
        n_neighbours,
        saturated,
    })
}
