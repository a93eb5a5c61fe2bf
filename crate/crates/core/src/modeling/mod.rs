//! Regression and diagnosticity: logistic MLE with cluster-robust
//! covariance, conditional logistic with fixed-effects fallbacks, VIF,
//! group-wise cross-validation, calibration, triad permutation and Top-1.

pub mod conditional;
pub mod design;
pub mod evaluate;
pub mod logistic;

pub use conditional::{fit_conditional_logistic, fit_group_fixed_effects, vif, ConditionalFit, FixedEffectsLink};
pub use design::{judgment_dataset, target_rows, truth_dataset, Dataset, ModelKind, ModelSpec, TargetRow};
pub use evaluate::{
    auc, brier, calibration, group_folds, groupwise_cv, top1_identification, triad_permutation_test, AblationResult,
    Calibration, CalibrationBin, CvResult, EvalMetrics, FoldMetrics, PermutationResult, Top1Result,
};
pub use logistic::{
    cluster_robust_cov, fit_logistic, fit_logit, predict, ClusterLevel, Coefficient, FitOptions, FitResult, LogitFit,
};

use crate::cues::Feature;
use crate::error::Result;

/// Fits a dataset's full model with inference.
pub fn regress(ds: &Dataset, cluster: ClusterLevel, opts: &FitOptions) -> Result<FitResult> {
    let clusters = ds.clusters(cluster);
    fit_logistic(&ds.x, &ds.y, &ds.names, &ds.null_cols, clusters.as_deref().map(|c| (c, cluster)), opts)
}

/// Conditional logit on a truth dataset, strata = groups.
pub fn conditional(ds: &Dataset, opts: &FitOptions) -> Result<ConditionalFit> {
    fit_conditional_logistic(&ds.x, &ds.y, &ds.groups, &ds.names, opts)
}

/// VIF over the dataset's feature columns.
pub fn feature_vif(ds: &Dataset) -> Result<Vec<(String, f64)>> {
    let cols: Vec<usize> = ds.null_cols.iter().skip(1).chain(&ds.feature_cols).copied().collect();
    let cols: Vec<usize> = cols.into_iter().filter(|&j| !ds.names[j].contains('[')).collect();
    let names: Vec<String> = cols.iter().map(|&j| ds.names[j].clone()).collect();
    vif(&ds.x.select_columns(&cols), &names)
}

/// Cross-validated AUC with and without the latency features, on the same
/// complete-case rows.
pub fn ablate_timing(
    rows: &[TargetRow],
    spec: &ModelSpec,
    k: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<AblationResult> {
    let required: Vec<Feature> = spec.required();
    let full = truth_dataset(rows, spec, &required)?;
    let ablated = truth_dataset(rows, &spec.ablate_timing()?, &required)?;
    let a = groupwise_cv(&full, k, seed, 10, opts)?.mean.auc;
    let b = groupwise_cv(&ablated, k, seed, 10, opts)?.mean.auc;
    Ok(AblationResult { auc_full: a, auc_ablated: b, delta_auc: b - a })
}
