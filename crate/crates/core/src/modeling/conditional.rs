//! Conditional (stratum-softmax) logistic regression, the group
//! fixed-effects fallbacks, and variance inflation factors.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::logistic::{coefficient_table, collinear_set, fit_logit, Coefficient, FitOptions};
use crate::error::{Error, Result};

/// Row indices of each stratum, in first-appearance order of the ids.
pub fn strata_index(strata: &[String]) -> Vec<Vec<usize>> {
    let mut order: Vec<&str> = Vec::new();
    let mut map: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, s) in strata.iter().enumerate() {
        map.entry(s.as_str())
            .or_insert_with(|| {
                order.push(s.as_str());
                Vec::new()
            })
            .push(i);
    }
    order.into_iter().map(|s| map.remove(s).unwrap()).collect()
}

/// Columns that vary within at least one stratum.
pub fn within_varying_columns(x: &DMatrix<f64>, strata: &[Vec<usize>]) -> Vec<usize> {
    (0..x.ncols())
        .filter(|&j| strata.iter().any(|s| s.iter().any(|&i| (x[(i, j)] - x[(s[0], j)]).abs() > 1e-12)))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalFit {
    pub coefficients: Vec<Coefficient>,
    /// Columns dropped because they are constant within every stratum.
    pub dropped: Vec<String>,
    pub loglik: f64,
    pub loglik_null: f64,
    pub n: usize,
    pub n_strata: usize,
    pub iterations: usize,
}

impl ConditionalFit {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

fn check_strata(y: &[f64], strata: &[String], idx: &[Vec<usize>]) -> Result<()> {
    let bad: Vec<String> = idx
        .iter()
        .filter(|s| s.iter().filter(|&&i| y[i] == 1.0).count() != 1 || s.iter().any(|&i| y[i] != 0.0 && y[i] != 1.0))
        .map(|s| strata[s[0]].clone())
        .collect();
    if bad.is_empty() {
        Ok(())
    } else {
        Err(Error::Stratum(bad))
    }
}

fn cond_loglik(x: &DMatrix<f64>, y: &[f64], idx: &[Vec<usize>], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    idx.iter()
        .map(|s| {
            let m = s.iter().map(|&i| eta[i]).fold(f64::NEG_INFINITY, f64::max);
            let lse = m + s.iter().map(|&i| (eta[i] - m).exp()).sum::<f64>().ln();
            let pos = s.iter().find(|&&i| y[i] == 1.0).unwrap();
            eta[*pos] - lse
        })
        .sum()
}

/// Conditional logistic regression with exactly one positive per stratum:
/// the likelihood is the softmax of linear scores within each stratum.
/// Stratum-constant columns (intercept, group covariates) are dropped.
pub fn fit_conditional_logistic(
    x: &DMatrix<f64>,
    y: &[f64],
    strata: &[String],
    names: &[String],
    opts: &FitOptions,
) -> Result<ConditionalFit> {
    let idx = strata_index(strata);
    check_strata(y, strata, &idx)?;
    let keep = within_varying_columns(x, &idx);
    let dropped: Vec<String> = (0..names.len()).filter(|j| !keep.contains(j)).map(|j| names[j].clone()).collect();
    let x = x.select_columns(&keep);
    let names: Vec<String> = keep.iter().map(|&j| names[j].clone()).collect();
    let p = x.ncols();
    let loglik_null = -idx.iter().map(|s| (s.len() as f64).ln()).sum::<f64>();
    if p == 0 {
        return Ok(ConditionalFit {
            coefficients: vec![],
            dropped,
            loglik: loglik_null,
            loglik_null,
            n: y.len(),
            n_strata: idx.len(),
            iterations: 0,
        });
    }
    let mut beta = DVector::zeros(p);
    let mut ll = cond_loglik(&x, y, &idx, &beta);
    let mut trace = Vec::new();
    for it in 0..=opts.max_iter {
        let eta = &x * &beta;
        let mut grad = DVector::zeros(p);
        let mut info = DMatrix::zeros(p, p);
        for s in &idx {
            let m = s.iter().map(|&i| eta[i]).fold(f64::NEG_INFINITY, f64::max);
            let w: Vec<f64> = s.iter().map(|&i| (eta[i] - m).exp()).collect();
            let tot: f64 = w.iter().sum();
            let mut xbar = DVector::zeros(p);
            let mut xx = DMatrix::zeros(p, p);
            for (k, &i) in s.iter().enumerate() {
                let pi = w[k] / tot;
                let xi = x.row(i).transpose();
                xbar += &xi * pi;
                xx += &xi * xi.transpose() * pi;
                if y[i] == 1.0 {
                    grad += &xi;
                }
            }
            grad -= &xbar;
            info += xx - &xbar * xbar.transpose();
        }
        let gnorm = grad.norm();
        trace.push(gnorm);
        if beta.amax() > opts.eta_limit {
            return Err(Error::Separation("conditional likelihood is unbounded in some direction".into()));
        }
        let chol = info.clone().cholesky();
        if gnorm < opts.tol {
            let cov = chol.ok_or_else(|| Error::Singular(collinear_set(&x, &names)))?.inverse();
            return Ok(ConditionalFit {
                coefficients: coefficient_table(&names, &beta, &cov),
                dropped,
                loglik: ll,
                loglik_null,
                n: y.len(),
                n_strata: idx.len(),
                iterations: it,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let chol = chol.ok_or_else(|| Error::Singular(collinear_set(&x, &names)))?;
        let step = chol.solve(&grad);
        let mut t = 1.0;
        loop {
            let cand = &beta + &step * t;
            let ll_c = cond_loglik(&x, y, &idx, &cand);
            if ll_c >= ll - 1e-12 * ll.abs().max(1.0) || t < 1e-10 {
                beta = cand;
                ll = ll_c;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, trace })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixedEffectsLink {
    /// Log-linear model with stratum indicators; its slopes equal the
    /// conditional-logit estimates exactly.
    Poisson,
    /// Logistic model with stratum indicators; differs from the conditional
    /// estimate in small strata (incidental-parameter bias).
    Logistic,
}

/// Group fixed-effects fit: stratum indicators plus the within-varying
/// columns of `x`. Returns the slope coefficients (model-based SEs).
pub fn fit_group_fixed_effects(
    x: &DMatrix<f64>,
    y: &[f64],
    strata: &[String],
    names: &[String],
    link: FixedEffectsLink,
    opts: &FitOptions,
) -> Result<Vec<Coefficient>> {
    let idx = strata_index(strata);
    let keep = within_varying_columns(x, &idx);
    let g = idx.len();
    let n = y.len();
    let p = keep.len();
    let mut full = DMatrix::zeros(n, g + p);
    for (k, s) in idx.iter().enumerate() {
        for &i in s {
            full[(i, k)] = 1.0;
        }
    }
    for (c, &j) in keep.iter().enumerate() {
        full.set_column(g + c, &x.column(j));
    }
    let mut all_names: Vec<String> = (0..g).map(|k| format!("stratum[{}]", strata[idx[k][0]])).collect();
    all_names.extend(keep.iter().map(|&j| names[j].clone()));
    let (coef, cov) = match link {
        FixedEffectsLink::Logistic => {
            let f = fit_logit(&full, y, &all_names, &FitOptions { ridge: 0.0, ..*opts })?;
            (f.coef, f.cov)
        }
        FixedEffectsLink::Poisson => fit_poisson(&full, y, &all_names, opts)?,
    };
    let slope_names = all_names[g..].to_vec();
    let slope = DVector::from_iterator(p, coef.iter().skip(g).copied());
    let slope_cov = cov.view((g, g), (p, p)).into_owned();
    Ok(coefficient_table(&slope_names, &slope, &slope_cov))
}

fn fit_poisson(
    x: &DMatrix<f64>,
    y: &[f64],
    names: &[String],
    opts: &FitOptions,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let p = x.ncols();
    let yv = DVector::from_column_slice(y);
    let ll = |b: &DVector<f64>| -> f64 { (x * b).iter().zip(y).map(|(&e, &yi)| yi * e - e.exp()).sum() };
    // Start from log of the stratum means so the first step is well scaled.
    let mut beta = DVector::zeros(p);
    let mut cur = ll(&beta);
    let mut trace = Vec::new();
    for it in 0..=opts.max_iter {
        let mu = (x * &beta).map(f64::exp);
        let grad = x.transpose() * (&yv - &mu);
        let info = x.transpose() * DMatrix::from_diagonal(&mu) * x;
        trace.push(grad.norm());
        let chol = info.cholesky().ok_or_else(|| Error::Singular(collinear_set(x, names)))?;
        if grad.norm() < opts.tol {
            return Ok((beta, chol.inverse()));
        }
        if it == opts.max_iter {
            break;
        }
        let step = chol.solve(&grad);
        let mut t = 1.0;
        loop {
            let cand = &beta + &step * t;
            let c = ll(&cand);
            if c >= cur - 1e-12 * cur.abs().max(1.0) || t < 1e-10 {
                beta = cand;
                cur = c;
                break;
            }
            t *= 0.5;
        }
    }
    Err(Error::NonConvergence { iterations: opts.max_iter, trace })
}

/// Variance inflation factors of the columns of `x` (no intercept column):
/// `VIF_j = 1 / (1 − R²_j)`, i.e. the diagonal of the inverse correlation
/// matrix.
pub fn vif(x: &DMatrix<f64>, names: &[String]) -> Result<Vec<(String, f64)>> {
    let (n, p) = x.shape();
    let mut c = x.clone();
    for j in 0..p {
        let m = c.column(j).mean();
        let sd = (c.column(j).map(|v| (v - m).powi(2)).sum() / n as f64).sqrt();
        if sd == 0.0 {
            return Err(Error::Singular(vec![names[j].clone()]));
        }
        for i in 0..n {
            c[(i, j)] = (c[(i, j)] - m) / sd;
        }
    }
    let r = c.transpose() * &c / n as f64;
    let eig = r.clone().symmetric_eigen();
    if eig.eigenvalues.iter().any(|&v| v < 1e-10) {
        return Err(Error::Singular(collinear_set(&c, names)));
    }
    let inv = r.try_inverse().ok_or_else(|| Error::Singular(collinear_set(&c, names)))?;
    Ok(names.iter().enumerate().map(|(j, n)| (n.clone(), inv[(j, j)])).collect())
}
