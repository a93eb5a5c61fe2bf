//! Out-of-sample diagnosticity: AUC, Brier, calibration, group-wise CV,
//! the triad label-permutation test and Top-1 identification.

use std::collections::BTreeMap;

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::conditional::strata_index;
use super::design::Dataset;
use super::logistic::{fit_logit, predict, FitOptions};
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, logit, mean, percentile_interval, stream_rng, variance};

/// Concordant-pair fraction, ties weighted one half.
pub fn auc(p: &[f64], y: &[f64]) -> Result<f64> {
    let n1 = y.iter().filter(|&&v| v == 1.0).count();
    let n0 = y.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::Evaluation("AUC undefined: only one class present".into()));
    }
    let ranks = crate::numeric::average_ranks(p);
    let rank_sum: f64 = ranks.iter().zip(y).filter(|(_, &v)| v == 1.0).map(|(r, _)| r).sum();
    Ok((rank_sum - (n1 * (n1 + 1)) as f64 / 2.0) / (n1 as f64 * n0 as f64))
}

pub fn brier(p: &[f64], y: &[f64]) -> f64 {
    p.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub slope: f64,
    pub intercept: f64,
    pub ece: f64,
    pub curve: Vec<CalibrationBin>,
    /// Probabilities clipped into [1e-6, 1 − 1e-6].
    pub clipped: usize,
}

/// Logistic recalibration of outcomes on logit(p), plus quantile-binned ECE.
/// Constant predictions carry no ranking information: slope is reported as
/// 0 and the intercept as the logit of the base rate.
pub fn calibration(p: &[f64], y: &[f64], bins: usize) -> Result<Calibration> {
    if p.is_empty() || p.len() != y.len() {
        return Err(Error::Evaluation("calibration needs paired, nonempty inputs".into()));
    }
    let eps = 1e-6;
    let mut clipped = 0;
    let pc: Vec<f64> = p
        .iter()
        .map(|&v| {
            let c = v.clamp(eps, 1.0 - eps);
            if c != v {
                clipped += 1;
            }
            c
        })
        .collect();
    let n = pc.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pc[a].total_cmp(&pc[b]).then(a.cmp(&b)));
    let bins = bins.max(1).min(n);
    let mut curve = Vec::with_capacity(bins);
    let mut ece = 0.0;
    // Equal-count bins whose edges never split a run of tied probabilities.
    let mut lo = 0;
    for b in 0..bins {
        let mut hi = ((b + 1) * n / bins).max(lo);
        while hi < n && hi > 0 && pc[order[hi]] == pc[order[hi - 1]] {
            hi += 1;
        }
        if hi <= lo {
            continue;
        }
        let idx = &order[lo..hi];
        lo = hi;
        let conf = idx.iter().map(|&i| pc[i]).sum::<f64>() / idx.len() as f64;
        let acc = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        ece += idx.len() as f64 / n as f64 * (acc - conf).abs();
        curve.push(CalibrationBin { confidence: conf, accuracy: acc, count: idx.len() });
    }
    let base = mean(y);
    let lp: Vec<f64> = pc.iter().map(|&v| logit(v)).collect();
    let spread = lp.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - lp.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    let (slope, intercept) = if spread < 1e-12 {
        (0.0, if base > 0.0 && base < 1.0 { logit(base) } else { f64::NAN })
    } else {
        let mut x = DMatrix::zeros(n, 2);
        for i in 0..n {
            x[(i, 0)] = 1.0;
            x[(i, 1)] = lp[i];
        }
        let names = ["intercept".to_string(), "logit_p".to_string()];
        let f = fit_logit(&x, y, &names, &FitOptions { eta_limit: 50.0, ..Default::default() })?;
        (f.coef[1], f.coef[0])
    };
    Ok(Calibration { slope, intercept, ece, curve, clipped })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub auc: f64,
    pub brier: f64,
    pub slope: f64,
    pub intercept: f64,
    pub ece: f64,
}

impl EvalMetrics {
    pub fn compute(p: &[f64], y: &[f64], bins: usize) -> EvalMetrics {
        let cal = calibration(p, y, bins).ok();
        EvalMetrics {
            auc: auc(p, y).unwrap_or(f64::NAN),
            brier: brier(p, y),
            slope: cal.as_ref().map(|c| c.slope).unwrap_or(f64::NAN),
            intercept: cal.as_ref().map(|c| c.intercept).unwrap_or(f64::NAN),
            ece: cal.as_ref().map(|c| c.ece).unwrap_or(f64::NAN),
        }
    }

    fn fields(&self) -> [f64; 5] {
        [self.auc, self.brier, self.slope, self.intercept, self.ece]
    }

    fn from_fields(f: [f64; 5]) -> Self {
        EvalMetrics { auc: f[0], brier: f[1], slope: f[2], intercept: f[3], ece: f[4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    pub metrics: EvalMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub k: usize,
    pub folds: Vec<FoldMetrics>,
    pub skipped_folds: usize,
    pub mean: EvalMetrics,
    pub sd: EvalMetrics,
    /// Metrics over all out-of-fold predictions pooled.
    pub pooled: EvalMetrics,
    pub oof: Vec<Option<f64>>,
    pub fold_of_row: Vec<usize>,
}

/// Fold per row: the distinct groups are shuffled with the seed and dealt
/// round-robin into `k` folds, so no group straddles folds.
pub fn group_folds(groups: &[String], k: usize, seed: u64) -> Result<Vec<usize>> {
    let mut distinct: Vec<&str> = groups.iter().map(String::as_str).collect();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < k || k < 2 {
        return Err(Error::Evaluation(format!("{} groups cannot fill {k} folds", distinct.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["cv-folds"]));
    distinct.shuffle(&mut rng);
    let fold: BTreeMap<&str, usize> = distinct.iter().enumerate().map(|(i, g)| (*g, i % k)).collect();
    Ok(groups.iter().map(|g| fold[g.as_str()]).collect())
}

fn mean_sd(rows: &[[f64; 5]]) -> (EvalMetrics, EvalMetrics) {
    let mut m = [f64::NAN; 5];
    let mut s = [f64::NAN; 5];
    for j in 0..5 {
        let v: Vec<f64> = rows.iter().map(|r| r[j]).filter(|x| x.is_finite()).collect();
        if !v.is_empty() {
            m[j] = mean(&v);
            s[j] = if v.len() > 1 { variance(&v, 1).sqrt() } else { 0.0 };
        }
    }
    (EvalMetrics::from_fields(m), EvalMetrics::from_fields(s))
}

/// Group-wise k-fold cross-validation of the dataset's logistic model.
pub fn groupwise_cv(ds: &Dataset, k: usize, seed: u64, bins: usize, opts: &FitOptions) -> Result<CvResult> {
    let fold_of_row = group_folds(&ds.groups, k, seed)?;
    let results: Vec<(usize, std::result::Result<(Vec<usize>, Vec<f64>), Option<Error>>)> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..ds.n()).filter(|&i| fold_of_row[i] != f).collect();
            let test: Vec<usize> = (0..ds.n()).filter(|&i| fold_of_row[i] == f).collect();
            let ytr: Vec<f64> = train.iter().map(|&i| ds.y[i]).collect();
            let pos = ytr.iter().filter(|&&v| v == 1.0).count();
            if pos == 0 || pos == ytr.len() {
                warn!("fold {f}: training outcome has one class; skipped");
                return (f, Err(None));
            }
            match fit_logit(&ds.x.select_rows(&train), &ytr, &ds.names, opts) {
                Ok(fit) => (f, Ok((test.clone(), predict(&ds.x.select_rows(&test), &fit.coef)))),
                Err(e) => {
                    warn!("fold {f}: fit failed ({e}); skipped");
                    (f, Err(Some(e)))
                }
            }
        })
        .collect();
    let mut oof = vec![None; ds.n()];
    let mut folds = Vec::new();
    let mut skipped = 0;
    let mut first_error = None;
    for (f, r) in results {
        match r {
            Ok((test, p)) => {
                let yt: Vec<f64> = test.iter().map(|&i| ds.y[i]).collect();
                for (&i, &pi) in test.iter().zip(&p) {
                    oof[i] = Some(pi);
                }
                folds.push(FoldMetrics { fold: f, n_test: test.len(), metrics: EvalMetrics::compute(&p, &yt, bins) });
            }
            Err(e) => {
                skipped += 1;
                if first_error.is_none() {
                    first_error = e;
                }
            }
        }
    }
    if folds.is_empty() {
        // A fit failure in every fold is that failure, not an evaluation bug.
        return Err(first_error.unwrap_or_else(|| Error::Evaluation("every cross-validation fold was skipped".into())));
    }
    let rows: Vec<[f64; 5]> = folds.iter().map(|f| f.metrics.fields()).collect();
    let (mean, sd) = mean_sd(&rows);
    let (pp, py): (Vec<f64>, Vec<f64>) = oof.iter().zip(&ds.y).filter_map(|(p, y)| p.map(|p| (p, *y))).unzip();
    Ok(CvResult {
        k,
        folds,
        skipped_folds: skipped,
        mean,
        sd,
        pooled: EvalMetrics::compute(&pp, &py, bins),
        oof,
        fold_of_row,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub observed: f64,
    pub null_mean: f64,
    pub null_sd: f64,
    pub null_interval: (f64, f64),
    pub p: f64,
    pub n_perm: usize,
    /// Permutations whose pipeline failed (excluded from the null).
    pub failed: usize,
    pub null: Vec<f64>,
}

/// Each permutation moves the single AI label of every triad to a uniformly
/// chosen member and reruns the cross-validated pipeline. The p-value uses
/// the add-one rule.
pub fn triad_permutation_test(
    ds: &Dataset,
    k: usize,
    seed: u64,
    n_perm: usize,
    opts: &FitOptions,
) -> Result<PermutationResult> {
    let strata = strata_index(&ds.groups);
    let bad: Vec<String> = strata
        .iter()
        .filter(|s| s.iter().filter(|&&i| ds.y[i] == 1.0).count() != 1)
        .map(|s| ds.groups[s[0]].clone())
        .collect();
    if !bad.is_empty() {
        return Err(Error::Stratum(bad));
    }
    let observed = groupwise_cv(ds, k, seed, 10, opts)?.mean.auc;
    let perm_seed = derive_seed(seed, &["triad-permutation"]);
    let null_all: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(perm_seed, b as u64);
            let mut y = vec![0.0; ds.n()];
            for s in &strata {
                y[s[rng.random_range(0..s.len())]] = 1.0;
            }
            groupwise_cv(&ds.with_y(y), k, seed, 10, opts).map(|r| r.mean.auc).unwrap_or(f64::NAN)
        })
        .collect();
    let null: Vec<f64> = null_all.iter().copied().filter(|v| v.is_finite()).collect();
    let failed = n_perm - null.len();
    if null.is_empty() {
        return Err(Error::Evaluation("every permutation failed".into()));
    }
    let exceed = null.iter().filter(|&&v| v >= observed).count();
    Ok(PermutationResult {
        observed,
        null_mean: mean(&null),
        null_sd: if null.len() > 1 { variance(&null, 1).sqrt() } else { 0.0 },
        null_interval: percentile_interval(&null, 0.95),
        p: (1 + exceed) as f64 / (1 + null.len()) as f64,
        n_perm,
        failed,
        null,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Top1Result {
    pub accuracy: f64,
    pub ci: (f64, f64),
    pub chance: f64,
    pub n_triads: usize,
}

/// Picks the highest-scoring member of each stratum (random tie-break) and
/// scores a hit when it is the true positive; CI by resampling strata.
pub fn top1_identification(
    groups: &[String],
    scores: &[f64],
    y: &[f64],
    iters: usize,
    seed: u64,
) -> Result<Top1Result> {
    let strata = strata_index(groups);
    if strata.is_empty() {
        return Err(Error::Evaluation("no strata to score".into()));
    }
    let tie_seed = derive_seed(seed, &["top1-ties"]);
    let hits: Vec<f64> = strata
        .iter()
        .enumerate()
        .map(|(t, s)| {
            let best = s.iter().map(|&i| scores[i]).fold(f64::NEG_INFINITY, f64::max);
            let tied: Vec<usize> = s.iter().copied().filter(|&i| scores[i] == best).collect();
            let pick = if tied.len() == 1 {
                tied[0]
            } else {
                tied[stream_rng(tie_seed, t as u64).random_range(0..tied.len())]
            };
            (y[pick] == 1.0) as u8 as f64
        })
        .collect();
    let acc = mean(&hits);
    let boot_seed = derive_seed(seed, &["top1-bootstrap"]);
    let m = hits.len();
    let draws: Vec<f64> = (0..iters)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(boot_seed, b as u64);
            (0..m).map(|_| hits[rng.random_range(0..m)]).sum::<f64>() / m as f64
        })
        .collect();
    let ci = if iters > 0 { percentile_interval(&draws, 0.95) } else { (f64::NAN, f64::NAN) };
    let chance = strata.iter().map(|s| 1.0 / s.len() as f64).sum::<f64>() / strata.len() as f64;
    Ok(Top1Result { accuracy: acc, ci: (ci.0, ci.1.min(1.0)), chance, n_triads: strata.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationResult {
    pub auc_full: f64,
    pub auc_ablated: f64,
    pub delta_auc: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[0.9, 0.8, 0.4, 0.3], &[1.0, 1.0, 0.0, 0.0]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.2, 0.6], &[1.0, 1.0, 0.0]).unwrap(), 0.5);
        assert_eq!(auc(&[0.5, 0.5], &[1.0, 0.0]).unwrap(), 0.5);
        assert!(auc(&[0.1, 0.2], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn brier_example() {
        assert!((brier(&[0.8], &[1.0]) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn constant_predictions_have_zero_slope() {
        let y: Vec<f64> = (0..100).map(|i| (i % 4 == 0) as u8 as f64).collect();
        let c = calibration(&vec![0.25; 100], &y, 10).unwrap();
        assert_eq!(c.slope, 0.0);
        assert!((c.intercept - logit(0.25)).abs() < 1e-12);
        assert!(c.ece < 1e-12);
    }

    #[test]
    fn folds_never_split_groups() {
        let groups: Vec<String> = (0..60).map(|i| format!("g{}", i / 3)).collect();
        let f = group_folds(&groups, 5, 3).unwrap();
        for i in 0..60 {
            for j in 0..60 {
                if groups[i] == groups[j] {
                    assert_eq!(f[i], f[j]);
                }
            }
        }
        assert!(group_folds(&groups[..6], 5, 3).is_err());
    }

    #[test]
    fn top1_with_truth_scores_is_perfect() {
        let groups: Vec<String> = (0..30).map(|i| format!("g{}", i / 3)).collect();
        let y: Vec<f64> = (0..30).map(|i| (i % 3 == 1) as u8 as f64).collect();
        let r = top1_identification(&groups, &y, &y, 100, 1).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert!((r.chance - 1.0 / 3.0).abs() < 1e-12);
    }
}
