use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{EmbedParams, Embedding, FuzzyGraph};
use crate::error::{Error, Result};
use crate::linalg::{fix_column_signs, sym_eigen_desc};

const GRAD_CLIP: f64 = 4.0;
const INIT_EXTENT: f64 = 10.0;
const INIT_NOISE: f64 = 1e-4;
const CURVE_POINTS: usize = 300;

/// How the layout was initialized.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    Spectral,
    Random,
}

/// Fits `1 / (1 + a x^(2b))` to the offset-exponential target curve
/// (1 below `min_dist`, `exp(-(x - min_dist) / spread)` above) on
/// 300 points of `[0, 3 spread]`, by Levenberg-Marquardt from `(1, 1)`.
pub fn find_ab_params(spread: f64, min_dist: f64) -> Result<(f64, f64)> {
    if !(spread > 0.0 && min_dist > 0.0 && min_dist.is_finite()) {
        return Err(Error::param(format!(
            "spread = {spread} and min_dist = {min_dist} must be positive"
        )));
    }
    let xs: Vec<f64> = (0..CURVE_POINTS)
        .map(|i| 3.0 * spread * i as f64 / (CURVE_POINTS - 1) as f64)
        .collect();
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            if x < min_dist {
                1.0
            } else {
                (-(x - min_dist) / spread).exp()
            }
        })
        .collect();

    // residuals and Jacobian rows for the current (a, b)
    let eval = |a: f64, b: f64| {
        let mut sse = 0.0;
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for (&x, &y) in xs.iter().zip(&ys) {
            let (xp, lnx) = if x > 0.0 { (x.powf(2.0 * b), x.ln()) } else { (0.0, 0.0) };
            let den = 1.0 + a * xp;
            let r = 1.0 / den - y;
            let ja = -xp / (den * den);
            let jb = -a * xp * 2.0 * lnx / (den * den);
            sse += r * r;
            jtj[0][0] += ja * ja;
            jtj[0][1] += ja * jb;
            jtj[1][1] += jb * jb;
            jtr[0] += ja * r;
            jtr[1] += jb * r;
        }
        jtj[1][0] = jtj[0][1];
        (sse, jtj, jtr)
    };

    let (mut a, mut b) = (1.0f64, 1.0f64);
    let (mut sse, mut jtj, mut jtr) = eval(a, b);
    let mut lambda = 1e-3;
    for _ in 0..500 {
        let m00 = jtj[0][0] * (1.0 + lambda);
        let m11 = jtj[1][1] * (1.0 + lambda);
        let m01 = jtj[0][1];
        let det = m00 * m11 - m01 * m01;
        if det.abs() < 1e-300 {
            break;
        }
        let da = -(m11 * jtr[0] - m01 * jtr[1]) / det;
        let db = -(m00 * jtr[1] - m01 * jtr[0]) / det;
        let (na, nb) = (a + da, b + db);
        let (nsse, njtj, njtr) = eval(na, nb);
        if nsse.is_finite() && nsse <= sse {
            let done = (sse - nsse) <= 1e-15 * sse.max(1e-300) && da.abs() < 1e-12 && db.abs() < 1e-12;
            (a, b, sse, jtj, jtr) = (na, nb, nsse, njtj, njtr);
            lambda = (lambda / 10.0).max(1e-12);
            if done {
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                break;
            }
        }
    }
    if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
        return Err(Error::param(format!("curve fit diverged for min_dist = {min_dist}")));
    }
    Ok((a, b))
}

/// Eigenvectors 2 and 3 of the normalized graph Laplacian, scaled so the
/// largest coordinate has magnitude 10.
fn spectral_layout(g: &FuzzyGraph) -> Option<Vec<[f64; 2]>> {
    let p = g.len();
    if p < 3 {
        return None;
    }
    let deg: Vec<f64> = g.weights.iter().map(|r| r.iter().sum()).collect();
    if deg.iter().any(|&d| d <= 0.0) {
        return None;
    }
    let lap = DMatrix::from_fn(p, p, |i, j| {
        let off = g.weights[i][j] / (deg[i] * deg[j]).sqrt();
        if i == j {
            1.0 - off
        } else {
            -off
        }
    });
    let (_, vecs) = sym_eigen_desc(&lap).ok()?;
    let mut two = DMatrix::from_fn(p, 2, |i, c| vecs[(i, p - 2 - c)]);
    fix_column_signs(&mut two);
    let max = two.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(max.is_finite() && max > 0.0) {
        return None;
    }
    let scale = INIT_EXTENT / max;
    Some((0..p).map(|i| [two[(i, 0)] * scale, two[(i, 1)] * scale]).collect())
}

/// Rescales each axis to `[0, 10]`.
fn rescale(coords: &mut [[f64; 2]]) {
    for d in 0..2 {
        let lo = coords.iter().map(|c| c[d]).fold(f64::INFINITY, f64::min);
        let hi = coords.iter().map(|c| c[d]).fold(f64::NEG_INFINITY, f64::max);
        let span = hi - lo;
        for c in coords.iter_mut() {
            c[d] = if span > 0.0 {
                INIT_EXTENT * (c[d] - lo) / span
            } else {
                0.0
            };
        }
    }
}

fn initial_layout(g: &FuzzyGraph, rng: &mut ChaCha8Rng) -> (Vec<[f64; 2]>, Init) {
    let p = g.len();
    let spectral = if g.components().len() == 1 {
        spectral_layout(g)
    } else {
        None
    };
    let (mut coords, init) = match spectral {
        Some(mut c) => {
            let noise = Normal::new(0.0, INIT_NOISE).expect("valid normal");
            for pt in c.iter_mut() {
                pt[0] += noise.sample(rng);
                pt[1] += noise.sample(rng);
            }
            (c, Init::Spectral)
        }
        None => {
            let c = (0..p)
                .map(|_| {
                    [
                        rng.random_range(-INIT_EXTENT..INIT_EXTENT),
                        rng.random_range(-INIT_EXTENT..INIT_EXTENT),
                    ]
                })
                .collect();
            (c, Init::Random)
        }
    };
    rescale(&mut coords);
    (coords, init)
}

fn clip(v: f64) -> f64 {
    v.clamp(-GRAD_CLIP, GRAD_CLIP)
}

/// Stochastic gradient state for one layout, advanced one epoch at a time
/// so several layouts can be interleaved.
pub(crate) struct Layout {
    pub coords: Vec<[f64; 2]>,
    pub init: Init,
    head: Vec<usize>,
    tail: Vec<usize>,
    epochs_per_sample: Vec<f64>,
    next_sample: Vec<f64>,
    epochs_per_negative: Vec<f64>,
    next_negative: Vec<f64>,
    a: f64,
    b: f64,
    rng: ChaCha8Rng,
    n_epochs: usize,
    learning_rate: f64,
}

impl Layout {
    pub fn new(g: &FuzzyGraph, params: &EmbedParams) -> Result<Self> {
        if params.n_neighbours < 2 || params.n_neighbours >= g.len() {
            return Err(Error::param(format!(
                "n_neighbours = {} must satisfy 2 <= n_neighbours < p = {}",
                params.n_neighbours,
                g.len()
            )));
        }
        if params.n_epochs == 0 || !(params.learning_rate > 0.0) {
            return Err(Error::param("n_epochs and learning_rate must be positive"));
        }
        let (a, b) = find_ab_params(1.0, params.min_dist)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let (coords, init) = initial_layout(g, &mut rng);

        let p = g.len();
        let max_w = g.weights.iter().flatten().fold(0.0f64, |m, &w| m.max(w));
        let floor = max_w / params.n_epochs as f64;
        let (mut head, mut tail, mut eps) = (Vec::new(), Vec::new(), Vec::new());
        for i in 0..p {
            for j in 0..p {
                let w = g.weights[i][j];
                if i != j && w > 0.0 && w >= floor {
                    head.push(i);
                    tail.push(j);
                    eps.push(max_w / w);
                }
            }
        }
        let neg: Vec<f64> = eps
            .iter()
            .map(|e| match params.negative_sample_rate {
                0 => f64::INFINITY,
                r => e / r as f64,
            })
            .collect();
        Ok(Layout {
            coords,
            init,
            head,
            tail,
            next_sample: eps.clone(),
            epochs_per_sample: eps,
            next_negative: neg.clone(),
            epochs_per_negative: neg,
            a,
            b,
            rng,
            n_epochs: params.n_epochs,
            learning_rate: params.learning_rate,
        })
    }

    pub fn n_epochs(&self) -> usize {
        self.n_epochs
    }

    /// Learning rate used during epoch `n`.
    pub fn alpha(&self, n: usize) -> f64 {
        self.learning_rate * (1.0 - n as f64 / self.n_epochs as f64)
    }

    pub fn epoch(&mut self, n: usize) -> Result<()> {
        let alpha = self.alpha(n);
        let epoch = n as f64;

        let (a, b) = (self.a, self.b);
        let p = self.coords.len();
        for e in 0..self.head.len() {
            if self.next_sample[e] > epoch {
                continue;
            }
            let (j, k) = (self.head[e], self.tail[e]);
            let cur = self.coords[j];
            let other = self.coords[k];
            let dx = [cur[0] - other[0], cur[1] - other[1]];
            let d2 = dx[0] * dx[0] + dx[1] * dx[1];
            let coeff = if d2 > 0.0 {
                -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
            } else {
                0.0
            };
            if !coeff.is_finite() {
                return Err(Error::NonFiniteGradient { epoch: n, edge: e });
            }
            for d in 0..2 {
                let g = clip(coeff * dx[d]);
                self.coords[j][d] += g * alpha;
                self.coords[k][d] -= g * alpha;
            }
            self.next_sample[e] += self.epochs_per_sample[e];

            let n_neg = ((epoch - self.next_negative[e]) / self.epochs_per_negative[e]).floor();
            let n_neg = if n_neg > 0.0 { n_neg as usize } else { 0 };
            for _ in 0..n_neg {
                let k = self.rng.random_range(0..p);
                if k == j {
                    continue;
                }
                let cur = self.coords[j];
                let other = self.coords[k];
                let dx = [cur[0] - other[0], cur[1] - other[1]];
                let d2 = dx[0] * dx[0] + dx[1] * dx[1];
                for d in 0..2 {
                    let g = if d2 > 0.0 {
                        let coeff = 2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0));
                        if !coeff.is_finite() {
                            return Err(Error::NonFiniteGradient { epoch: n, edge: e });
                        }
                        clip(coeff * dx[d])
                    } else {
                        GRAD_CLIP
                    };
                    self.coords[j][d] += g * alpha;
                }
            }
            self.next_negative[e] += n_neg as f64 * self.epochs_per_negative[e];
        }
        if self.coords.iter().any(|c| !(c[0].is_finite() && c[1].is_finite())) {
            return Err(Error::NonFiniteGradient {
                epoch: n,
                edge: self.head.len(),
            });
        }
        Ok(())
    }
}

/// Lays the graph out in the plane by stochastic gradient descent on the
/// fuzzy cross-entropy, with per-edge sampling proportional to weight and
/// negative sampling. Single-threaded and bit-reproducible for a fixed seed.
pub fn embed(g: &FuzzyGraph, params: &EmbedParams) -> Result<Embedding> {
    let mut layout = Layout::new(g, params)?;
    for n in 0..layout.n_epochs() {
        layout.epoch(n)?;
    }
    Ok(Embedding {
        labels: g.labels.clone(),
        coords: layout.coords,
        params: params.clone(),
        seed: params.seed,
        init: layout.init,
    })
}
