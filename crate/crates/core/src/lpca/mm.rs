//! Majorization-minimization iterations over distinct row patterns.

use std::collections::hash_map::Entry;
use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use super::{BinaryData, FitOptions};
use crate::error::{Error, Result};
use crate::linalg;

const MISSING: u8 = 2;

/// Distinct rows with their multiplicities. The majorizer's working
/// response depends on a row only through its pattern, so every quantity
/// the fit needs is a weighted sum over patterns.
pub(super) struct Patterns {
    rows: usize,
    p: usize,
    /// Column-major codes: 0 absent, 1 present, [`MISSING`].
    code: Vec<u8>,
    weight: DVector<f64>,
    first_row: Vec<usize>,
}

impl Patterns {
    pub(super) fn new(data: &BinaryData) -> Self {
        let (n, p) = (data.nrows(), data.ncols());
        let mut index: HashMap<Vec<u8>, usize> = HashMap::new();
        let mut keys: Vec<Vec<u8>> = Vec::new();
        let mut first_row = Vec::new();
        let mut weight: Vec<f64> = Vec::new();
        for i in 0..n {
            let key: Vec<u8> = (0..p)
                .map(|j| match (data.observed[(i, j)], data.x[(i, j)] > 0.5) {
                    (false, _) => MISSING,
                    (true, present) => u8::from(present),
                })
                .collect();
            match index.entry(key) {
                Entry::Occupied(e) => weight[*e.get()] += 1.0,
                Entry::Vacant(e) => {
                    keys.push(e.key().clone());
                    e.insert(first_row.len());
                    first_row.push(i);
                    weight.push(1.0);
                }
            }
        }
        let rows = keys.len();
        let code = (0..p).flat_map(|j| keys.iter().map(move |k| k[j])).collect();
        Patterns {
            rows,
            p,
            code,
            weight: DVector::from_vec(weight),
            first_row,
        }
    }

    fn saturated(&self, m: f64) -> DMatrix<f64> {
        DMatrix::from_iterator(
            self.rows,
            self.p,
            self.code.iter().map(|&c| match c {
                0 => -m,
                1 => m,
                _ => 0.0,
            }),
        )
    }

    /// Weighted deviance of `theta = 1 offset^T + scores u^T`, and
    /// `x - sigmoid(theta)` on observed entries (0 on missing ones).
    fn evaluate(&self, offset: &DVector<f64>, scores: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<(f64, DMatrix<f64>)> {
        let rows = self.rows;
        let mut resid = Vec::with_capacity(rows * self.p);
        // softplus(+-t) = max(+-t, 0) + ln(1 + e^-|t|); each row's logs are
        // taken once on the product, which stays below 2^p
        let mut linear = vec![0.0; rows];
        let mut product = vec![1.0; rows];
        let mut col = vec![0.0; rows];
        for j in 0..self.p {
            let codes = &self.code[j * rows..(j + 1) * rows];
            col.fill(offset[j]);
            for (c, sc) in scores.as_slice().chunks_exact(rows).enumerate() {
                let w = u[(j, c)];
                for (t, s) in col.iter_mut().zip(sc) {
                    *t += w * s;
                }
            }
            if let Some(r) = col.iter().position(|t| t.is_nan()) {
                return Err(Error::NanParameter {
                    row: self.first_row[r],
                    col: j,
                });
            }
            let lanes = col.iter().zip(codes).zip(linear.iter_mut()).zip(product.iter_mut());
            resid.extend(lanes.map(|(((&t, &c), linear), product)| {
                if c == MISSING {
                    return 0.0;
                }
                let e = (-t.abs()).exp();
                *product *= 1.0 + e;
                let inv = 1.0 / (1.0 + e);
                let sig = if t >= 0.0 { inv } else { e * inv };
                if c == 1 {
                    *linear += (-t).max(0.0);
                    1.0 - sig
                } else {
                    *linear += t.max(0.0);
                    -sig
                }
            }));
        }
        let total: f64 = self
            .weight
            .iter()
            .zip(linear.iter().zip(&product))
            .map(|(w, (l, p))| w * (l + p.ln()))
            .sum();
        Ok((2.0 * total, DMatrix::from_vec(rows, self.p, resid)))
    }

    pub(super) fn offset_deviance(&self, mu: &[f64]) -> Result<f64> {
        let none = DMatrix::zeros(self.rows, 0);
        Ok(self
            .evaluate(&DVector::from_column_slice(mu), &none, &DMatrix::zeros(self.p, 0))?
            .0)
    }

    fn column_sums(&self, a: &DMatrix<f64>) -> DVector<f64> {
        a.tr_mul(&self.weight)
    }
}

pub(super) struct FitState {
    pub mu: Vec<f64>,
    pub u: DMatrix<f64>,
    /// Offset `mu - U U^T mu` of the fitted parameters.
    offset: DVector<f64>,
    resid: DMatrix<f64>,
    pub dev: f64,
}

pub(super) struct Run {
    pub state: FitState,
    /// Deviance at the start and after every accepted update.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(super) struct Majorizer<'a> {
    pat: &'a Patterns,
    sat: DMatrix<f64>,
    /// `sat^T W sat` with `W` the pattern multiplicities.
    sat_cross: DMatrix<f64>,
    /// Transpose of `sat` with rows scaled by multiplicity.
    sat_w_t: DMatrix<f64>,
    /// `sat^T w`
    sat_sums: DVector<f64>,
    total: f64,
    k: usize,
}

impl<'a> Majorizer<'a> {
    pub(super) fn new(pat: &'a Patterns, m: f64, k: usize) -> Self {
        let sat = pat.saturated(m);
        let mut sat_w = sat.clone();
        for mut col in sat_w.column_iter_mut() {
            col.component_mul_assign(&pat.weight);
        }
        let sat_w_t = sat_w.transpose();
        Majorizer {
            pat,
            sat_cross: &sat_w_t * &sat,
            sat_sums: pat.column_sums(&sat),
            sat,
            sat_w_t,
            total: pat.weight.sum(),
            k,
        }
    }

    /// Top eigenvectors of the scatter of the saturated parameters about
    /// their column means.
    pub(super) fn initial_loadings(&self) -> Result<DMatrix<f64>> {
        let sums = &self.sat_sums;
        let scatter = &self.sat_cross - (sums * sums.transpose()) / self.total;
        linalg::top_eigenvectors(&scatter, self.k)
    }

    fn state(&self, mu: Vec<f64>, u: DMatrix<f64>) -> Result<FitState> {
        // 1 mu^T + (sat - 1 mu^T) U U^T
        let mu_v = DVector::from_column_slice(&mu);
        let offset = &mu_v - &u * (u.transpose() * &mu_v);
        let (dev, resid) = self.pat.evaluate(&offset, &(&self.sat * &u), &u)?;
        Ok(FitState {
            mu,
            u,
            offset,
            resid,
            dev,
        })
    }

    /// One majorization-minimization update.
    fn step(&self, s: &FitState) -> Result<FitState> {
        let p = self.pat.p;
        // working response of the quadratic majorizer: z = theta + 4 resid
        // mu = column means of z - sat U U^T; that projection equals
        // theta - 1 mu^T + 1 (U U^T mu)^T
        let mu_v = DVector::from_column_slice(&s.mu);
        let uu_mu = &s.u * (s.u.transpose() * &mu_v);
        let resid_sums = self.pat.column_sums(&s.resid);
        let mu: Vec<f64> = (0..p)
            .map(|j| s.mu[j] - uu_mu[j] + 4.0 * resid_sums[j] / self.total)
            .collect();

        // with A = sat - 1 mu^T and B = z - 1 mu^T, the eigenproblem is on
        // A^T B + B^T A - A^T A, expanded in sat^T W z and the column sums
        // of z; with theta = 1 offset^T + sat U U^T only resid is swept
        let sat_u = &self.sat_cross * &s.u;
        let sz = &self.sat_sums * s.offset.transpose() + &sat_u * s.u.transpose() + (&self.sat_w_t * &s.resid) * 4.0;
        let z_sums = &s.offset * self.total + &s.u * (s.u.transpose() * &self.sat_sums) + &resid_sums * 4.0;
        let total = self.total;
        let target = DMatrix::from_fn(p, p, |a, b| {
            sz[(a, b)] + sz[(b, a)] - self.sat_cross[(a, b)] - mu[a] * z_sums[b] - z_sums[a] * mu[b]
                + total * mu[a] * mu[b]
        });
        let u = linalg::top_eigenvectors(&target, self.k)?;
        self.state(mu, u)
    }

    /// Squared extrapolation through three successive states, on the
    /// offsets and the projection `U U^T`. `None` when the step length
    /// would not go beyond `s2`.
    fn extrapolate(&self, s0: &FitState, s1: &FitState, s2: &FitState) -> Result<Option<FitState>> {
        let proj = |s: &FitState| &s.u * s.u.transpose();
        let (p0, p1, p2) = (proj(s0), proj(s1), proj(s2));
        let r_p = &p1 - &p0;
        let v_p = &p2 - &p1 * 2.0 + &p0;
        let r_mu: Vec<f64> = s1.mu.iter().zip(&s0.mu).map(|(a, b)| a - b).collect();
        let v_mu: Vec<f64> = (0..s0.mu.len()).map(|j| s2.mu[j] - 2.0 * s1.mu[j] + s0.mu[j]).collect();
        let sq = |m: &DMatrix<f64>, v: &[f64]| m.norm_squared() + v.iter().map(|x| x * x).sum::<f64>();
        let (r, v) = (sq(&r_p, &r_mu).sqrt(), sq(&v_p, &v_mu).sqrt());
        if !(v > 0.0) || r <= v {
            return Ok(None);
        }
        let alpha = -r / v;
        let (c1, c2) = (-2.0 * alpha, alpha * alpha);
        let jump = &p0 + &r_p * c1 + &v_p * c2;
        let jump = (&jump + jump.transpose()) * 0.5;
        let mu: Vec<f64> = (0..s0.mu.len())
            .map(|j| s0.mu[j] + c1 * r_mu[j] + c2 * v_mu[j])
            .collect();
        let u = linalg::top_eigenvectors(&jump, self.k)?;
        self.state(mu, u).map(Some)
    }

    /// Iterates from `(mu, u)` until the relative deviance decrease drops
    /// below `opts.tol` or `opts.max_iter` updates have been made.
    pub(super) fn run(&self, mu: Vec<f64>, u: DMatrix<f64>, opts: &FitOptions) -> Result<Run> {
        let mut state = self.state(mu, u)?;
        let mut trace = vec![state.dev];
        let mut iterations = 0;
        let settled = |old: f64, new: f64| {
            let rel = if old > 0.0 { (old - new) / old } else { 0.0 };
            rel < opts.tol
        };

        // A step that raises the deviance can only come from rounding at a
        // stationary point; it is dropped and the fit ends where it was.
        while iterations < opts.max_iter {
            let s1 = self.step(&state)?;
            if s1.dev > state.dev {
                return Ok(Run {
                    state,
                    trace,
                    iterations,
                    converged: true,
                });
            }
            iterations += 1;
            trace.push(s1.dev);
            if settled(state.dev, s1.dev) {
                return Ok(Run {
                    state: s1,
                    trace,
                    iterations,
                    converged: true,
                });
            }
            if !opts.accelerate || iterations == opts.max_iter {
                state = s1;
                continue;
            }
            let s2 = self.step(&s1)?;
            if s2.dev > s1.dev {
                return Ok(Run {
                    state: s1,
                    trace,
                    iterations,
                    converged: true,
                });
            }
            iterations += 1;
            trace.push(s2.dev);
            if settled(s1.dev, s2.dev) {
                return Ok(Run {
                    state: s2,
                    trace,
                    iterations,
                    converged: true,
                });
            }
            if iterations < opts.max_iter {
                if let Some(jump) = self.extrapolate(&state, &s1, &s2)? {
                    let s3 = self.step(&jump)?;
                    if s3.dev <= s2.dev {
                        iterations += 1;
                        trace.push(s3.dev);
                        state = s3;
                        continue;
                    }
                }
            }
            state = s2;
        }
        Ok(Run {
            state,
            trace,
            iterations,
            converged: false,
        })
    }
}
