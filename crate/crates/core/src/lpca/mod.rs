//! Logistic PCA for binary data.
//!
//! The model projects saturated natural parameters `m (2X - 1)` onto a
//! `k`-dimensional subspace around column offsets `mu`:
//!
//! ```text
//! theta_hat = 1 mu^T + (theta_sat - 1 mu^T) U U^T,    U^T U = I
//! ```
//!
//! and is fitted by majorization-minimization of the Bernoulli deviance.
//! Each iteration replaces the deviance by a quadratic with curvature 1/4
//! around the current fit, updates `mu` in closed form and `U` as the top-k
//! eigenvectors of a `p x p` symmetric matrix, so the deviance never
//! increases. Missing entries are excluded from the deviance and from the
//! majorizer; their saturated parameter is 0.

mod mm;
mod select;

pub use select::{
    scan, select_k, DevianceScan, ScanOptions, ScanRecord, SelectOptions, Selection, SelectionStep, DEFAULT_FOLDS,
    DEFAULT_M_GRID, LOO_MAX_ROWS,
};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cohort::Cohort;
use crate::error::{Error, Result};
use crate::linalg;
use mm::{FitState, Majorizer, Patterns, Run};

/// Offset bound used by the null model for all-absent / all-present columns.
pub const LOGIT_CLIP: f64 = 18.0;

/// Dense 0/1 matrix with an observation mask.
#[derive(Clone, Debug, PartialEq)]
pub struct BinaryData {
    /// 1.0 present, 0.0 absent or missing.
    pub x: DMatrix<f64>,
    pub observed: DMatrix<bool>,
    pub labels: Vec<String>,
}

impl BinaryData {
    pub fn from_cohort(cohort: &Cohort) -> Self {
        let (n, p) = (cohort.n_cases(), cohort.n_symptoms());
        BinaryData {
            x: DMatrix::from_fn(n, p, |i, j| cohort.get(i, j).value().unwrap_or(0.0)),
            observed: DMatrix::from_fn(n, p, |i, j| cohort.get(i, j).is_observed()),
            labels: cohort.symptom_ids(),
        }
    }

    /// Complete data from rows of 0/1 values.
    pub fn complete(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let p = rows.first().map_or(0, Vec::len);
        BinaryData {
            x: DMatrix::from_fn(n, p, |i, j| rows[i][j]),
            observed: DMatrix::from_element(n, p, true),
            labels: (0..p).map(|j| format!("s{j}")).collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.x.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.x.ncols()
    }

    pub fn select_rows(&self, rows: &[usize]) -> BinaryData {
        BinaryData {
            x: self.x.select_rows(rows),
            observed: self.observed.select_rows(rows),
            labels: self.labels.clone(),
        }
    }

    /// `m (2x - 1)` on observed entries, 0 elsewhere.
    pub fn saturated(&self, m: f64) -> DMatrix<f64> {
        self.x
            .zip_map(&self.observed, |x, o| if o { m * (2.0 * x - 1.0) } else { 0.0 })
    }

    fn column_observed(&self, j: usize) -> usize {
        self.observed.column(j).iter().filter(|&&o| o).count()
    }
}

#[inline]
fn softplus(t: f64) -> f64 {
    t.max(0.0) + (-t.abs()).exp().ln_1p()
}

#[inline]
pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn entry_deviance(x: f64, theta: f64) -> f64 {
    // -2 log p(x | theta) = 2 softplus(-theta) for x = 1, 2 softplus(theta) for x = 0
    2.0 * if x > 0.5 { softplus(-theta) } else { softplus(theta) }
}

fn check_shape(data: &BinaryData, theta: &DMatrix<f64>) -> Result<()> {
    if theta.shape() != data.x.shape() {
        return Err(Error::Shape(format!(
            "theta is {:?}, data is {:?}",
            theta.shape(),
            data.x.shape()
        )));
    }
    Ok(())
}

/// Bernoulli deviance over observed entries.
pub fn deviance(data: &BinaryData, theta: &DMatrix<f64>) -> Result<f64> {
    check_shape(data, theta)?;
    let mut total = 0.0;
    for j in 0..theta.ncols() {
        for i in 0..theta.nrows() {
            let t = theta[(i, j)];
            if t.is_nan() {
                return Err(Error::NanParameter { row: i, col: j });
            }
            if data.observed[(i, j)] {
                total += entry_deviance(data.x[(i, j)], t);
            }
        }
    }
    Ok(total)
}

/// Gradient of [`deviance`] with respect to theta: `2 (sigmoid(theta) - x)`
/// on observed entries.
pub fn deviance_gradient(data: &BinaryData, theta: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shape(data, theta)?;
    Ok(DMatrix::from_fn(theta.nrows(), theta.ncols(), |i, j| {
        if data.observed[(i, j)] {
            2.0 * (sigmoid(theta[(i, j)]) - data.x[(i, j)])
        } else {
            0.0
        }
    }))
}

pub fn logit(q: f64) -> f64 {
    (q / (1.0 - q)).ln()
}

/// Per-column offsets of the rank-0 model: logit of the observed column
/// mean, clipped to `+-LOGIT_CLIP` for constant columns.
pub fn null_model(data: &BinaryData) -> Result<Vec<f64>> {
    (0..data.ncols())
        .map(|j| {
            let obs = data.column_observed(j);
            if obs == 0 {
                return Err(Error::NoObservations(data.labels[j].clone()));
            }
            let present: f64 = data
                .x
                .column(j)
                .iter()
                .zip(data.observed.column(j).iter())
                .filter(|(_, &o)| o)
                .map(|(&x, _)| x)
                .sum();
            let mean = present / obs as f64;
            Ok(if mean <= 0.0 {
                -LOGIT_CLIP
            } else if mean >= 1.0 {
                LOGIT_CLIP
            } else {
                logit(mean)
            })
        })
        .collect()
}

fn offsets_matrix(n: usize, mu: &[f64]) -> DMatrix<f64> {
    DMatrix::from_fn(n, mu.len(), |_, j| mu[j])
}

pub fn null_deviance(data: &BinaryData) -> Result<f64> {
    let mu = null_model(data)?;
    deviance(data, &offsets_matrix(data.nrows(), &mu))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Stop when the relative deviance decrease falls below this.
    pub tol: f64,
    /// When set, start from a random orthonormal `U` drawn with this seed
    /// instead of the deterministic eigenvector start.
    pub random_restart: Option<u64>,
    /// Squared extrapolation between pairs of MM steps, kept only when it
    /// lowers the deviance further than the plain steps.
    pub accelerate: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 1000,
            tol: 1e-6,
            random_restart: None,
            accelerate: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LpcaModel {
    pub labels: Vec<String>,
    /// `p x k` loadings with orthonormal columns.
    pub loadings: DMatrix<f64>,
    pub mu: Vec<f64>,
    pub m: f64,
    pub k: usize,
    pub fit_deviance: f64,
    pub null_deviance: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Deviance after initialisation and after every iteration.
    pub trace: Vec<f64>,
}

/// JSON form of a fitted model; `U` is row-major `p x k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelExport {
    pub labels: Vec<String>,
    #[serde(rename = "U")]
    pub loadings: Vec<f64>,
    pub mu: Vec<f64>,
    pub m: f64,
    pub k: usize,
    pub fit_deviance: f64,
    pub null_deviance: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl LpcaModel {
    pub fn export(&self) -> ModelExport {
        let p = self.loadings.nrows();
        ModelExport {
            labels: self.labels.clone(),
            loadings: (0..p)
                .flat_map(|j| (0..self.k).map(move |c| (j, c)))
                .map(|(j, c)| self.loadings[(j, c)])
                .collect(),
            mu: self.mu.clone(),
            m: self.m,
            k: self.k,
            fit_deviance: self.fit_deviance,
            null_deviance: self.null_deviance,
            converged: self.converged,
            iterations: self.iterations,
        }
    }

    /// Share of the null deviance explained by this fit.
    pub fn proportion_explained(&self) -> f64 {
        if self.null_deviance > 0.0 {
            1.0 - self.fit_deviance / self.null_deviance
        } else {
            0.0
        }
    }

    /// Fitted natural parameters for `data` (same symptom set).
    pub fn natural_parameters(&self, data: &BinaryData) -> Result<DMatrix<f64>> {
        if data.ncols() != self.mu.len() {
            return Err(Error::Shape(format!(
                "model has {} symptoms, data has {}",
                self.mu.len(),
                data.ncols()
            )));
        }
        Ok(natural_parameters(&data.saturated(self.m), &self.mu, &self.loadings))
    }

    /// Per-case scores `(theta_sat - mu) U`. Rows with missing entries use
    /// the observed entries only, scaled by `p / observed`.
    pub fn project(&self, data: &BinaryData) -> Result<DMatrix<f64>> {
        let p = self.mu.len();
        if data.ncols() != p {
            return Err(Error::Shape(format!(
                "model has {p} symptoms, data has {}",
                data.ncols()
            )));
        }
        let sat = data.saturated(self.m);
        let mut scores = DMatrix::zeros(data.nrows(), self.k);
        for i in 0..data.nrows() {
            let obs = (0..p).filter(|&j| data.observed[(i, j)]).count();
            if obs == 0 {
                return Err(Error::EmptyRow(i));
            }
            let scale = p as f64 / obs as f64;
            for c in 0..self.k {
                let s: f64 = (0..p)
                    .filter(|&j| data.observed[(i, j)])
                    .map(|j| (sat[(i, j)] - self.mu[j]) * self.loadings[(j, c)])
                    .sum();
                scores[(i, c)] = s * scale;
            }
        }
        Ok(scores)
    }
}

fn natural_parameters(sat: &DMatrix<f64>, mu: &[f64], u: &DMatrix<f64>) -> DMatrix<f64> {
    let mut centered = sat.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-mu[j]);
    }
    let mut theta = (&centered * u) * u.transpose();
    for (j, mut col) in theta.column_iter_mut().enumerate() {
        col.add_scalar_mut(mu[j]);
    }
    theta
}

fn random_orthonormal(p: usize, k: usize, seed: u64) -> Result<DMatrix<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(p, k, |_, _| StandardNormal.sample(&mut rng));
    linalg::orthonormalize(&a)
}

/// Fits a rank-`k` model with saturation magnitude `m`.
pub fn fit(data: &BinaryData, k: usize, m: f64, opts: &FitOptions) -> Result<LpcaModel> {
    fit_inner(data, k, m, opts, None)
}

/// As [`fit`], starting the iterations from another model's offsets and
/// loading column space instead of the default start.
pub fn fit_from(data: &BinaryData, k: usize, m: f64, opts: &FitOptions, start: &LpcaModel) -> Result<LpcaModel> {
    if start.loadings.shape() != (data.ncols(), k) || start.mu.len() != data.ncols() {
        return Err(Error::Shape(format!(
            "start model is {:?}, expected ({}, {k})",
            start.loadings.shape(),
            data.ncols()
        )));
    }
    fit_inner(data, k, m, opts, Some(start))
}

fn fit_inner(data: &BinaryData, k: usize, m: f64, opts: &FitOptions, start: Option<&LpcaModel>) -> Result<LpcaModel> {
    let (n, p) = (data.nrows(), data.ncols());
    if k > p {
        return Err(Error::param(format!("k = {k} exceeds p = {p}")));
    }
    if !(m > 0.0 && m.is_finite()) {
        return Err(Error::param(format!("m must be positive, got {m}")));
    }
    if n == 0 {
        return Err(Error::param("no cases"));
    }
    let null_mu = null_model(data)?;
    let pat = Patterns::new(data);
    let null_dev = pat.offset_deviance(&null_mu)?;
    if k == 0 {
        return Ok(LpcaModel {
            labels: data.labels.clone(),
            loadings: DMatrix::zeros(p, 0),
            mu: null_mu,
            m,
            k,
            fit_deviance: null_dev,
            null_deviance: null_dev,
            iterations: 0,
            converged: true,
            trace: vec![null_dev],
        });
    }

    let mm = Majorizer::new(&pat, m, k);
    let mu = start.map_or(null_mu, |s| s.mu.clone());
    let u = match (start, opts.random_restart) {
        (Some(s), _) => linalg::orthonormalize(&s.loadings)?,
        (None, Some(seed)) => random_orthonormal(p, k, seed)?,
        (None, None) => mm.initial_loadings()?,
    };
    let Run {
        state,
        trace,
        iterations,
        converged,
    } = mm.run(mu, u, opts)?;

    let FitState { mu, mut u, dev, .. } = state;
    linalg::fix_column_signs(&mut u);
    Ok(LpcaModel {
        labels: data.labels.clone(),
        loadings: u,
        mu,
        m,
        k,
        fit_deviance: dev,
        null_deviance: null_dev,
        iterations,
        converged,
        trace,
    })
}

/// Deviance of held-out rows under a trained model: each row's natural
/// parameters come from its own saturated parameters and the trained
/// `mu`, `U`.
pub fn heldout_deviance(model: &LpcaModel, data: &BinaryData) -> Result<f64> {
    let theta = model.natural_parameters(data)?;
    deviance(data, &theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data_with_missing(rows: &[&[i8]]) -> BinaryData {
        let n = rows.len();
        let p = rows[0].len();
        BinaryData {
            x: DMatrix::from_fn(n, p, |i, j| if rows[i][j] == 1 { 1.0 } else { 0.0 }),
            observed: DMatrix::from_fn(n, p, |i, j| rows[i][j] >= 0),
            labels: (0..p).map(|j| format!("s{j}")).collect(),
        }
    }

    #[test]
    fn deviance_half_is_eight_ln2() {
        let d = BinaryData::complete(&[vec![1.0], vec![0.0], vec![1.0], vec![0.0]]);
        let dev = deviance(&d, &DMatrix::zeros(4, 1)).unwrap();
        assert!((dev - 8.0 * std::f64::consts::LN_2).abs() < 1e-12);
        assert!((dev - 5.5452).abs() < 1e-4);
    }

    #[test]
    fn deviance_saturated_limit() {
        let d = BinaryData::complete(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let theta = d.saturated(50.0);
        assert!(deviance(&d, &theta).unwrap() <= 1e-6);
        let huge = d.saturated(1e4);
        assert_eq!(deviance(&d, &huge).unwrap(), 0.0);
        let wrong = -huge;
        let v = deviance(&d, &wrong).unwrap();
        assert!(v.is_finite() && (v - 8e4).abs() < 1e-6);
    }

    #[test]
    fn deviance_errors() {
        let d = BinaryData::complete(&[vec![1.0, 0.0]]);
        let mut t = DMatrix::zeros(1, 2);
        t[(0, 1)] = f64::NAN;
        assert!(matches!(deviance(&d, &t), Err(Error::NanParameter { row: 0, col: 1 })));
        assert!(matches!(deviance(&d, &DMatrix::zeros(2, 2)), Err(Error::Shape(_))));
    }

    #[test]
    fn masked_rows_do_not_count() {
        let a = data_with_missing(&[&[1, 0], &[0, 1]]);
        let b = data_with_missing(&[&[1, 0], &[0, 1], &[-1, -1]]);
        let ta = DMatrix::from_element(2, 2, 0.3);
        let tb = DMatrix::from_element(3, 2, 0.3);
        assert_eq!(deviance(&a, &ta).unwrap(), deviance(&b, &tb).unwrap());
    }

    #[test]
    fn null_model_values() {
        let d = data_with_missing(&[&[1, 1, 1, 0], &[0, 1, 1, 0], &[1, 1, 1, -1], &[0, 0, 1, 0]]);
        let mu = null_model(&d).unwrap();
        assert_eq!(mu[0], 0.0);
        assert!((mu[1] - 3f64.ln()).abs() < 1e-12);
        assert_eq!(mu[2], LOGIT_CLIP);
        assert_eq!(mu[3], -LOGIT_CLIP);
        let e = data_with_missing(&[&[1, -1]]);
        assert!(matches!(null_model(&e), Err(Error::NoObservations(_))));
    }

    #[test]
    fn k_zero_is_null_model() {
        let d = BinaryData::complete(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0]]);
        let model = fit(&d, 0, 4.0, &FitOptions::default()).unwrap();
        assert_eq!(model.mu, null_model(&d).unwrap());
        assert_eq!(model.proportion_explained(), 0.0);
    }

    #[test]
    fn fit_guards() {
        let d = BinaryData::complete(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(fit(&d, 3, 4.0, &FitOptions::default()).is_err());
        assert!(fit(&d, 1, 0.0, &FitOptions::default()).is_err());
        assert!(fit(&d, 1, f64::NAN, &FitOptions::default()).is_err());
    }

    #[test]
    fn nonconvergence_is_flagged() {
        let d = BinaryData::complete(&[
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let opts = FitOptions {
            max_iter: 1,
            tol: 0.0,
            ..FitOptions::default()
        };
        let model = fit(&d, 1, 4.0, &opts).unwrap();
        assert!(!model.converged);
        assert_eq!(model.iterations, 1);
        assert_eq!(model.trace.len(), 2);
    }

    #[test]
    fn random_restart_is_seeded() {
        let d = BinaryData::complete(&[
            vec![1.0, 0.0, 1.0],
            vec![0.0, 1.0, 1.0],
            vec![1.0, 1.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ]);
        let opts = FitOptions {
            random_restart: Some(7),
            ..FitOptions::default()
        };
        let a = fit(&d, 1, 4.0, &opts).unwrap();
        let b = fit(&d, 1, 4.0, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn project_all_absent_row() {
        let model = LpcaModel {
            labels: vec!["a".into(), "b".into(), "c".into()],
            loadings: DMatrix::from_row_slice(3, 1, &[0.6, 0.8, 0.0]),
            mu: vec![0.0; 3],
            m: 5.0,
            k: 1,
            fit_deviance: 0.0,
            null_deviance: 1.0,
            iterations: 0,
            converged: true,
            trace: vec![],
        };
        let d = BinaryData::complete(&[vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]]);
        let s = model.project(&d).unwrap();
        assert!((s[(0, 0)] - (-5.0 * 1.4)).abs() < 1e-12);
        assert!((s[(1, 0)] - 5.0 * 1.4).abs() < 1e-12);
        assert_eq!(s[(0, 0)], s[(2, 0)]);

        // missing entry: observed part rescaled by p / observed
        let m = data_with_missing(&[&[0, -1, 0]]);
        let s = model.project(&m).unwrap();
        assert!((s[(0, 0)] - (-5.0 * 0.6 * 1.5)).abs() < 1e-12);
        let empty = data_with_missing(&[&[-1, -1, -1]]);
        assert!(matches!(model.project(&empty), Err(Error::EmptyRow(0))));
    }
}
