//! Binomial logistic regression by Newton–Raphson with model-based and
//! cluster-robust covariance.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::numeric::{expit, normal_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Convergence when the score (gradient) norm falls below this.
    pub tol: f64,
    /// Linear predictors beyond this magnitude are treated as separation.
    pub eta_limit: f64,
    /// L2 penalty on non-intercept coefficients; exploratory use only.
    pub ridge: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { max_iter: 100, tol: 1e-8, eta_limit: 30.0, ridge: 0.0 }
    }
}

/// Raw Newton fit.
#[derive(Debug, Clone)]
pub struct LogitFit {
    pub coef: DVector<f64>,
    pub loglik: f64,
    /// Inverse observed information (model-based covariance).
    pub cov: DMatrix<f64>,
    pub fitted: DVector<f64>,
    pub iterations: usize,
}

pub fn loglik(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = x * beta;
    eta.iter()
        .zip(y)
        .map(|(&e, &yi)| {
            // log(1 + exp(e)) computed stably
            let log1pe = if e > 0.0 { e + (-e).exp().ln_1p() } else { e.exp().ln_1p() };
            yi * e - log1pe
        })
        .sum()
}

/// Names the columns involved in an exact linear dependence of `x`.
pub fn collinear_set(x: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let xtx = x.transpose() * x;
    let scale: Vec<f64> = (0..xtx.ncols()).map(|j| xtx[(j, j)].sqrt().max(1e-300)).collect();
    let corr = DMatrix::from_fn(xtx.nrows(), xtx.ncols(), |i, j| xtx[(i, j)] / (scale[i] * scale[j]));
    let eig = corr.symmetric_eigen();
    let mut involved = vec![false; names.len()];
    for (k, &val) in eig.eigenvalues.iter().enumerate() {
        if val.abs() < 1e-9 {
            for j in 0..names.len() {
                if eig.eigenvectors[(j, k)].abs() > 1e-6 {
                    involved[j] = true;
                }
            }
        }
    }
    names.iter().zip(involved).filter(|(_, b)| *b).map(|(n, _)| n.clone()).collect()
}

/// Maximum-likelihood logistic fit. Column 0 is taken to be the intercept
/// when a ridge penalty is applied.
pub fn fit_logit(x: &DMatrix<f64>, y: &[f64], names: &[String], opts: &FitOptions) -> Result<LogitFit> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::Data(format!("design has {n} rows, outcome {}", y.len())));
    }
    if n <= p {
        return Err(Error::Numeric(format!("need n > p (n = {n}, p = {p})")));
    }
    let yv = DVector::from_column_slice(y);
    let mut beta = DVector::zeros(p);
    let penalty = |b: &DVector<f64>| opts.ridge * 0.5 * b.iter().skip(1).map(|v| v * v).sum::<f64>();
    let mut ll = loglik(x, y, &beta) - penalty(&beta);
    let mut trace = Vec::new();
    for it in 0..=opts.max_iter {
        let eta = x * &beta;
        let mu = eta.map(expit);
        let w = mu.map(|m| m * (1.0 - m));
        let mut grad = x.transpose() * (&yv - &mu);
        let mut info = x.transpose() * DMatrix::from_diagonal(&w) * x;
        if opts.ridge > 0.0 {
            for j in 1..p {
                grad[j] -= opts.ridge * beta[j];
                info[(j, j)] += opts.ridge;
            }
        }
        let gnorm = grad.norm();
        trace.push(gnorm);
        let max_eta = eta.amax();
        if max_eta > opts.eta_limit {
            return Err(Error::Separation(format!(
                "linear predictor reached {max_eta:.1} after {it} iterations; outcome is (quasi-)perfectly predicted"
            )));
        }
        let chol = info.clone().cholesky();
        if gnorm < opts.tol {
            let cov = match chol {
                Some(c) => c.inverse(),
                None => return Err(Error::Singular(collinear_set(x, names))),
            };
            return Ok(LogitFit { coef: beta, loglik: ll, cov, fitted: mu, iterations: it });
        }
        if it == opts.max_iter {
            break;
        }
        let chol = match chol {
            Some(c) => c,
            None => {
                let set = collinear_set(x, names);
                if !set.is_empty() {
                    return Err(Error::Singular(set));
                }
                return Err(Error::Separation("information matrix lost rank during Newton steps".into()));
            }
        };
        let step = chol.solve(&grad);
        let mut t = 1.0;
        loop {
            let cand = &beta + &step * t;
            let ll_c = loglik(x, y, &cand) - penalty(&cand);
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
pub enum ClusterLevel {
    Participant,
    Group,
    None,
}

impl std::str::FromStr for ClusterLevel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "participant" => Ok(ClusterLevel::Participant),
            "group" => Ok(ClusterLevel::Group),
            "none" => Ok(ClusterLevel::None),
            _ => Err(Error::Config(format!("unknown cluster level `{s}`"))),
        }
    }
}

/// Cluster sandwich `c · B (Σ_g s_g s_gᵀ) B` with `B` the model covariance
/// and `c = G/(G−1) · (n−1)/(n−p)`. With one observation per cluster this
/// is the HC1 estimator.
pub fn cluster_robust_cov(
    x: &DMatrix<f64>,
    y: &[f64],
    fitted: &DVector<f64>,
    bread: &DMatrix<f64>,
    clusters: &[String],
) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut scores: Vec<DVector<f64>> = Vec::new();
    for i in 0..n {
        let k = *index.entry(clusters[i].as_str()).or_insert_with(|| {
            scores.push(DVector::zeros(p));
            scores.len() - 1
        });
        let r = y[i] - fitted[i];
        for j in 0..p {
            scores[k][j] += x[(i, j)] * r;
        }
    }
    let mut meat = DMatrix::zeros(p, p);
    for s in &scores {
        meat += s * s.transpose();
    }
    let g = scores.len() as f64;
    let c = g / (g - 1.0) * (n as f64 - 1.0) / (n as f64 - p as f64);
    bread * meat * bread * c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub z: f64,
    pub p: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub coefficients: Vec<Coefficient>,
    pub cov_model: Vec<Vec<f64>>,
    pub cov_robust: Option<Vec<Vec<f64>>>,
    pub cluster_level: ClusterLevel,
    pub n_clusters: Option<usize>,
    pub loglik: f64,
    pub loglik_null: f64,
    pub pseudo_r2: f64,
    pub aic: f64,
    pub lr_stat: f64,
    pub lr_df: usize,
    pub lr_p: f64,
    pub n: usize,
    pub iterations: usize,
}

impl FitResult {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn coefficient_table(names: &[String], coef: &DVector<f64>, cov: &DMatrix<f64>) -> Vec<Coefficient> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = cov[(j, j)].max(0.0).sqrt();
            let z = coef[j] / se;
            Coefficient {
                name: name.clone(),
                estimate: coef[j],
                se,
                z,
                p: 2.0 * normal_cdf(-z.abs()),
                ci: (coef[j] - 1.959963984540054 * se, coef[j] + 1.959963984540054 * se),
            }
        })
        .collect()
}

/// Full fit with inference. `null_cols` are the columns kept in the null
/// model for the LR test and pseudo-R² (always including the intercept).
pub fn fit_logistic(
    x: &DMatrix<f64>,
    y: &[f64],
    names: &[String],
    null_cols: &[usize],
    clusters: Option<(&[String], ClusterLevel)>,
    opts: &FitOptions,
) -> Result<FitResult> {
    let fit = fit_logit(x, y, names, opts)?;
    let xn = x.select_columns(null_cols);
    let null_names: Vec<String> = null_cols.iter().map(|&j| names[j].clone()).collect();
    let null_fit = fit_logit(&xn, y, &null_names, opts)?;
    let (cov_robust, n_clusters, level) = match clusters {
        Some((ids, level)) if level != ClusterLevel::None => {
            let c = cluster_robust_cov(x, y, &fit.fitted, &fit.cov, ids);
            let g = ids.iter().collect::<std::collections::HashSet<_>>().len();
            (Some(c), Some(g), level)
        }
        _ => (None, None, ClusterLevel::None),
    };
    let cov_used = cov_robust.as_ref().unwrap_or(&fit.cov);
    let lr_stat = (2.0 * (fit.loglik - null_fit.loglik)).max(0.0);
    let lr_df = names.len() - null_cols.len();
    let lr_p = if lr_df == 0 {
        1.0
    } else {
        1.0 - ChiSquared::new(lr_df as f64).map_err(|e| Error::Numeric(e.to_string()))?.cdf(lr_stat)
    };
    Ok(FitResult {
        coefficients: coefficient_table(names, &fit.coef, cov_used),
        cov_model: to_rows(&fit.cov),
        cov_robust: cov_robust.as_ref().map(to_rows),
        cluster_level: level,
        n_clusters,
        loglik: fit.loglik,
        loglik_null: null_fit.loglik,
        pseudo_r2: 1.0 - fit.loglik / null_fit.loglik,
        aic: -2.0 * fit.loglik + 2.0 * names.len() as f64,
        lr_stat,
        lr_df,
        lr_p,
        n: y.len(),
        iterations: fit.iterations,
    })
}

pub fn predict(x: &DMatrix<f64>, coef: &DVector<f64>) -> Vec<f64> {
    (x * coef).iter().map(|&e| expit(e)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(p: usize) -> Vec<String> {
        (0..p).map(|j| format!("x{j}")).collect()
    }

    #[test]
    fn no_effect_gives_zero_slope() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0]);
        let y = [0.0, 1.0, 0.0, 1.0];
        let f = fit_logit(&x, &y, &names(2), &FitOptions::default()).unwrap();
        assert!(f.coef[0].abs() < 1e-10 && f.coef[1].abs() < 1e-10);
    }

    // Reference: statsmodels Logit (Newton) on the same rows, with
    // cov_type="cluster" with pairs of rows and with singleton clusters.
    #[test]
    fn matches_reference_fit() {
        let xs = [0.5, -1.2, 0.3, 1.8, -0.7, 0.0, 2.2, -1.5, 0.9, -0.2, 1.1, -0.9];
        let y = [1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0];
        let mut x = DMatrix::zeros(12, 2);
        for i in 0..12 {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = xs[i];
        }
        let f = fit_logit(&x, &y, &names(2), &FitOptions::default()).unwrap();
        assert!((f.coef[0] - REF_COEF[0]).abs() < 1e-6, "{}", f.coef);
        assert!((f.coef[1] - REF_COEF[1]).abs() < 1e-6, "{}", f.coef);
        assert!((f.loglik - REF_LL).abs() < 1e-8);
        let pairs: Vec<String> = (0..12).map(|i| format!("c{}", i / 2)).collect();
        let v = cluster_robust_cov(&x, &y, &f.fitted, &f.cov, &pairs);
        assert!((v[(0, 0)].sqrt() - 0.8641309153664463).abs() < 1e-7);
        assert!((v[(1, 1)].sqrt() - 0.5626102393882899).abs() < 1e-7);
        let singles: Vec<String> = (0..12).map(|i| format!("c{i}")).collect();
        let v = cluster_robust_cov(&x, &y, &f.fitted, &f.cov, &singles);
        assert!((v[(0, 0)].sqrt() - 0.7752490400228094).abs() < 1e-7);
        assert!((v[(1, 1)].sqrt() - 0.6762493131461352).abs() < 1e-7);
    }
    const REF_COEF: [f64; 2] = [-0.19925589671755853, 1.2012257606919348];
    const REF_LL: f64 = -6.441560826916758;

    #[test]
    fn separation_is_reported() {
        let x = DMatrix::from_row_slice(6, 2, &[1.0, -3.0, 1.0, -2.0, 1.0, -1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 3.0]);
        let y = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        assert!(matches!(fit_logit(&x, &y, &names(2), &FitOptions::default()), Err(Error::Separation(_))));
    }

    #[test]
    fn duplicated_column_is_singular() {
        let x = DMatrix::from_row_slice(
            5,
            3,
            &[1.0, 0.1, 0.1, 1.0, 0.5, 0.5, 1.0, -0.3, -0.3, 1.0, 0.9, 0.9, 1.0, -1.0, -1.0],
        );
        let y = [0.0, 1.0, 0.0, 1.0, 1.0];
        match fit_logit(&x, &y, &names(3), &FitOptions::default()) {
            Err(Error::Singular(set)) => assert_eq!(set, vec!["x1".to_string(), "x2".to_string()]),
            other => panic!("{other:?}"),
        }
    }
}
