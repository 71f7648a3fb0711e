//! Deviance scan over `k` with cross-validated `m`, and the marginal-deviance
//! rule for choosing `k`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit, fit_from, heldout_deviance, null_deviance, BinaryData, FitOptions, LpcaModel};
use crate::error::{Error, Result};

/// Exact leave-one-out is used up to this many cases; k-fold above.
pub const LOO_MAX_ROWS: usize = 200;
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_M_GRID: [f64; 6] = [2.0, 4.0, 6.0, 8.0, 10.0, 12.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanOptions {
    pub k_max: usize,
    pub m_grid: Vec<f64>,
    /// Folds used when there are more than [`LOO_MAX_ROWS`] cases.
    pub folds: usize,
    pub seed: u64,
    /// Options for the full-data fits that give `P(k)`.
    pub fit: FitOptions,
    /// Options for the cross-validation fits, which only rank the grid.
    pub cv_fit: FitOptions,
}

impl ScanOptions {
    pub fn new(k_max: usize, seed: u64) -> Self {
        ScanOptions {
            k_max,
            m_grid: DEFAULT_M_GRID.to_vec(),
            folds: DEFAULT_FOLDS,
            seed,
            fit: FitOptions::default(),
            cv_fit: FitOptions {
                tol: 1e-4,
                ..FitOptions::default()
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub k: usize,
    pub m: f64,
    /// Share of null deviance explained by the full-data fit, `P(k)`.
    pub proportion: f64,
    /// `M(k) = P(k) - P(k-1)`.
    pub marginal: f64,
    /// Held-out deviance at the chosen `m`.
    pub cv_deviance: f64,
    /// Held-out deviance for every `m` in the grid, in grid order.
    pub cv_by_m: Vec<f64>,
    pub fit_deviance: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DevianceScan {
    pub null_deviance: f64,
    pub records: Vec<ScanRecord>,
    pub folds_used: usize,
    pub warnings: Vec<String>,
}

impl DevianceScan {
    pub fn proportions(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.proportion).collect()
    }

    pub fn marginals(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.marginal).collect()
    }
}

fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    if n <= LOO_MAX_ROWS {
        return (0..n).map(|i| vec![i]).collect();
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// Fits `k = 1..=k_max`, picking `m` per `k` by row-wise cross-validation
/// and recording deviance explained by the full-data fit at that `m`.
/// Work is spread over threads; results are reduced in index order.
pub fn scan(data: &BinaryData, opts: &ScanOptions) -> Result<DevianceScan> {
    let (n, p) = (data.nrows(), data.ncols());
    if opts.k_max == 0 || opts.k_max > p {
        return Err(Error::param(format!("k_max = {} must be in 1..={p}", opts.k_max)));
    }
    if opts.m_grid.is_empty() || opts.m_grid.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(Error::param("m grid must be non-empty and positive"));
    }
    if n > LOO_MAX_ROWS && opts.folds < 2 {
        return Err(Error::param("need at least 2 folds"));
    }
    let null_dev = null_deviance(data)?;

    let folds = fold_assignment(n, opts.folds, opts.seed);
    let mut warnings = Vec::new();
    let mut splits = Vec::new();
    for (f, test) in folds.iter().enumerate() {
        let mut is_test = vec![false; n];
        for &i in test {
            is_test[i] = true;
        }
        let train: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
        let train_data = data.select_rows(&train);
        let empty_col = (0..p).find(|&j| !train_data.observed.column(j).iter().any(|&o| o));
        if let Some(j) = empty_col {
            let msg = format!(
                "fold {f} skipped: column `{}` unobserved in training rows",
                data.labels[j]
            );
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        splits.push((train_data, data.select_rows(test)));
    }
    if splits.is_empty() {
        return Err(Error::param("every cross-validation fold was skipped"));
    }

    // along the m grid each fit starts from the previous one
    let chain = |d: &BinaryData, k: usize, fo: &FitOptions| -> Result<Vec<LpcaModel>> {
        let mut out: Vec<LpcaModel> = Vec::with_capacity(opts.m_grid.len());
        for &m in &opts.m_grid {
            let model = match out.last() {
                None => fit(d, k, m, fo)?,
                Some(prev) => fit_from(d, k, m, fo, prev)?,
            };
            out.push(model);
        }
        Ok(out)
    };
    let n_m = opts.m_grid.len();
    let per_fold = splits.len();
    let tasks: Vec<(usize, Option<usize>)> = (1..=opts.k_max)
        .flat_map(|k| std::iter::once((k, None)).chain((0..per_fold).map(move |f| (k, Some(f)))))
        .collect();
    // per task: the full-data chain, or a fold's held-out deviance per m
    let results: Vec<(Vec<LpcaModel>, Vec<f64>)> = tasks
        .par_iter()
        .map(|&(k, f)| match f {
            None => Ok((chain(data, k, &opts.fit)?, Vec::new())),
            Some(f) => {
                let (train, test) = &splits[f];
                let heldout = chain(train, k, &opts.cv_fit)?
                    .iter()
                    .map(|model| heldout_deviance(model, test))
                    .collect::<Result<_>>()?;
                Ok((Vec::new(), heldout))
            }
        })
        .collect::<Result<_>>()?;
    let mut full: Vec<Vec<LpcaModel>> = Vec::with_capacity(opts.k_max);
    let mut heldout = vec![vec![0.0; n_m]; opts.k_max];
    for (&(k, f), (models, dev)) in tasks.iter().zip(results) {
        match f {
            None => full.push(models),
            Some(_) => {
                for (acc, d) in heldout[k - 1].iter_mut().zip(dev) {
                    *acc += d;
                }
            }
        }
    }

    let chosen: Vec<(usize, Vec<f64>)> = heldout
        .into_iter()
        .map(|cv_by_m| {
            let best = (0..n_m)
                .min_by(|&a, &b| cv_by_m[a].total_cmp(&cv_by_m[b]))
                .expect("non-empty grid");
            (best, cv_by_m)
        })
        .collect();
    let refits: Vec<&LpcaModel> = chosen.iter().enumerate().map(|(i, (mi, _))| &full[i][*mi]).collect();

    let mut records = Vec::with_capacity(opts.k_max);
    let mut prev = 0.0;
    for (i, ((mi, cv_by_m), model)) in chosen.into_iter().zip(refits).enumerate() {
        let proportion = if null_dev > 0.0 {
            1.0 - model.fit_deviance / null_dev
        } else {
            0.0
        };
        if !model.converged {
            warnings.push(format!("k = {} full-data fit did not converge", i + 1));
        }
        records.push(ScanRecord {
            k: i + 1,
            m: opts.m_grid[mi],
            proportion,
            marginal: proportion - prev,
            cv_deviance: cv_by_m[mi],
            cv_by_m,
            fit_deviance: model.fit_deviance,
            converged: model.converged,
        });
        prev = proportion;
    }
    Ok(DevianceScan {
        null_deviance: null_dev,
        records,
        folds_used: per_fold,
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectOptions {
    /// `M(k)` must be at least this multiple of the median of later `M`.
    pub drop_ratio: f64,
    /// Components explaining more than this share are treated as over-fit.
    pub overfit: f64,
    /// When the rule does not settle on `k >= 2`, return 2 flagged ambiguous.
    pub ambiguity_fallback: bool,
}

impl Default for SelectOptions {
    fn default() -> Self {
        SelectOptions {
            drop_ratio: 3.0,
            overfit: 0.95,
            ambiguity_fallback: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionStep {
    pub k: usize,
    pub marginal: f64,
    pub tail_median: f64,
    pub overfit: bool,
    pub passes: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub k: usize,
    pub ambiguous: bool,
    /// `k` picked by the marginal-deviance rule alone, if it fired.
    pub rule_k: Option<usize>,
    pub steps: Vec<SelectionStep>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Largest `k` whose marginal deviance is at least `drop_ratio` times the
/// median marginal deviance of all larger `k`, excluding over-fit `k`.
pub fn select_k(scan: &DevianceScan, opts: &SelectOptions) -> Result<Selection> {
    let recs = &scan.records;
    if recs.len() < 3 {
        return Err(Error::param(format!(
            "need at least 3 scan records, got {}",
            recs.len()
        )));
    }
    let steps: Vec<SelectionStep> = (0..recs.len() - 1)
        .map(|i| {
            let tail: Vec<f64> = recs[i + 1..].iter().map(|r| r.marginal).collect();
            let tail_median = median(&tail);
            let overfit = recs[i].proportion > opts.overfit;
            SelectionStep {
                k: recs[i].k,
                marginal: recs[i].marginal,
                tail_median,
                overfit,
                passes: !overfit && recs[i].marginal >= opts.drop_ratio * tail_median,
            }
        })
        .collect();
    let rule_k = steps.iter().rev().find(|s| s.passes).map(|s| s.k);
    let (k, ambiguous) = match (rule_k, opts.ambiguity_fallback) {
        (Some(k), true) if k >= 2 => (k, false),
        (_, true) => (2, true),
        (Some(k), false) => (k, false),
        (None, false) => (1, true),
    };
    Ok(Selection {
        k,
        ambiguous,
        rule_k,
        steps,
    })
}
