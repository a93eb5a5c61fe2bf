mod common;

use covert_lab::cues::{CueConfig, CueDictionary, LatencyMode};
use covert_lab::modeling::{
    ablate_timing, auc, calibration, cluster_robust_cov, fit_conditional_logistic, fit_group_fixed_effects,
    fit_logistic, fit_logit, groupwise_cv, triad_permutation_test, truth_dataset, ClusterLevel, FitOptions,
    FixedEffectsLink, ModelKind, ModelSpec,
};
use covert_lab::sim::{simulate_experiment, PlantedEffect, WorldConfig};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dm(x: &common::Mat) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), x[0].len(), |i, j| x[i][j])
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

#[test]
fn logistic_fits_match_an_independent_newton_solver() {
    let mut worst = 0.0f64;
    for seed in 0..25 {
        let d = common::logit_dataset(seed);
        let p = d.x[0].len();
        let fit = fit_logit(&dm(&d.x), &d.y, &names(p), &FitOptions::default()).unwrap();
        let (b, cov) = common::newton_logit(&d.x, &d.y);
        for j in 0..p {
            worst = worst.max((fit.coef[j] - b[j]).abs());
            assert!((fit.cov[(j, j)] - cov[j][j]).abs() < 1e-8, "seed {seed} var {j}");
        }
    }
    assert!(worst < 1e-6, "max |Δβ| = {worst:e}");
}

#[test]
fn cluster_robust_errors_match_the_sandwich_formula() {
    for seed in 100..125 {
        let d = common::logit_dataset(seed);
        let p = d.x[0].len();
        let res = fit_logistic(
            &dm(&d.x),
            &d.y,
            &names(p),
            &[0],
            Some((&d.clusters, ClusterLevel::Group)),
            &FitOptions::default(),
        )
        .unwrap();
        let beta: Vec<f64> = res.coefficients.iter().map(|c| c.estimate).collect();
        let v = common::sandwich(&d.x, &d.y, &beta, &d.clusters);
        for (j, c) in res.coefficients.iter().enumerate() {
            assert!((c.se - v[j][j].sqrt()).abs() < 1e-8, "seed {seed} se {j}: {} vs {}", c.se, v[j][j].sqrt());
        }
        let robust = res.cov_robust.unwrap();
        for j in 0..p {
            for k in 0..p {
                assert!((robust[j][k] - v[j][k]).abs() < 1e-8);
            }
        }
    }
}

#[test]
fn singleton_clusters_reduce_to_hc1() {
    let d = common::logit_dataset(7);
    let p = d.x[0].len();
    let n = d.y.len();
    let fit = fit_logit(&dm(&d.x), &d.y, &names(p), &FitOptions::default()).unwrap();
    let ids: Vec<String> = (0..n).map(|i| i.to_string()).collect();
    let lib = cluster_robust_cov(&dm(&d.x), &d.y, &fit.fitted, &fit.cov, &ids);
    let beta: Vec<f64> = fit.coef.iter().copied().collect();
    let v = common::sandwich(&d.x, &d.y, &beta, &ids);
    // G = n, so the factor is n/(n−p): the HC1 scaling.
    for j in 0..p {
        assert!((lib[(j, j)] - v[j][j]).abs() < 1e-10);
    }
}

#[test]
fn conditional_logit_matches_oracle_and_poisson_fixed_effects() {
    for seed in 0..25u64 {
        let p = 1 + (seed as usize % 4);
        let (x, y, s) = common::triad_dataset(seed, 60, p);
        let strata: Vec<String> = s.iter().map(|k| format!("g{k}")).collect();
        let cl = fit_conditional_logistic(&dm(&x), &y, &strata, &names(p), &FitOptions::default()).unwrap();
        let oracle = common::newton_clogit(&x, &y, &s);
        let fe =
            fit_group_fixed_effects(&dm(&x), &y, &strata, &names(p), FixedEffectsLink::Poisson, &FitOptions::default())
                .unwrap();
        for j in 0..p {
            assert!((cl.coefficients[j].estimate - oracle[j]).abs() < 1e-6, "seed {seed}");
            assert!((cl.coefficients[j].estimate - fe[j].estimate).abs() < 1e-4, "seed {seed}");
            assert!((cl.coefficients[j].se - fe[j].se).abs() < 1e-4, "seed {seed}");
        }
    }
}

#[test]
fn calibrated_probabilities_calibrate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p: Vec<f64> = (0..5000).map(|_| rng.random_range(0.02..0.98)).collect();
    let y: Vec<f64> = p.iter().map(|&pi| if rng.random::<f64>() < pi { 1.0 } else { 0.0 }).collect();
    let c = calibration(&p, &y, 10).unwrap();
    assert!((c.slope - 1.0).abs() < 0.1, "slope {}", c.slope);
    assert!(c.intercept.abs() < 0.1, "intercept {}", c.intercept);
    assert!(c.ece < 0.03, "ece {}", c.ece);
    let flat = calibration(&vec![0.4; 5000], &y, 10).unwrap();
    assert!(flat.slope.abs() < 1e-12);
}

#[test]
fn overconfident_predictions_have_slope_below_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eta: Vec<f64> = (0..5000).map(|_| common::normal(&mut rng)).collect();
    let y: Vec<f64> =
        eta.iter().map(|&e| if rng.random::<f64>() < 1.0 / (1.0 + (-e).exp()) { 1.0 } else { 0.0 }).collect();
    let sharp: Vec<f64> = eta.iter().map(|&e| 1.0 / (1.0 + (-2.0 * e).exp())).collect();
    let c = calibration(&sharp, &y, 10).unwrap();
    assert!((c.slope - 0.5).abs() < 0.1, "slope {}", c.slope);
    assert!(c.ece > 0.05);
}

#[test]
fn auc_is_invariant_to_monotone_transforms() {
    let d = common::logit_dataset(11);
    let s: Vec<f64> = d.x.iter().map(|r| r[1]).collect();
    let t: Vec<f64> = s.iter().map(|v| v.exp() * 3.0 - 1.0).collect();
    assert_eq!(auc(&s, &d.y).unwrap(), auc(&t, &d.y).unwrap());
}

fn planted_h2(planted: PlantedEffect, seed: u64) -> covert_lab::modeling::Dataset {
    let world = WorldConfig { n_groups: 149, seed, planted, ..Default::default() }.with_conditions(&["H2_S", "H2_C"]);
    let out = simulate_experiment(&world, &CueDictionary::demo()).unwrap();
    let rows = out.target_rows(&CueDictionary::demo(), &CueConfig::default()).unwrap();
    truth_dataset(&rows, &ModelSpec::new(ModelKind::TruthH2), &[]).unwrap()
}

#[test]
fn removing_timing_changes_nothing_when_only_text_cues_differ() {
    let world = WorldConfig { n_groups: 149, planted: PlantedEffect::demo(), ..Default::default() }
        .with_conditions(&["H2_S", "H2_C"]);
    assert_eq!(world.planted.shift("latency_mean_s"), 0.0);
    let out = simulate_experiment(&world, &CueDictionary::demo()).unwrap();
    let rows = out.target_rows(&CueDictionary::demo(), &CueConfig::default()).unwrap();
    let ab = ablate_timing(&rows, &ModelSpec::new(ModelKind::TruthH2), 5, 0, &FitOptions::default()).unwrap();
    assert!(ab.delta_auc.abs() < 0.01, "ΔAUC {}", ab.delta_auc);
}

#[test]
fn removing_timing_hurts_when_timing_is_the_signal() {
    let planted = PlantedEffect { shifts: [("latency_mean_s".to_string(), 1.5)].into() };
    let world = WorldConfig { n_groups: 149, planted, ..Default::default() }.with_conditions(&["H2_S", "H2_C"]);
    let out = simulate_experiment(&world, &CueDictionary::demo()).unwrap();
    // Inter-message latency mostly reflects the other speakers' pace.
    let cues = CueConfig { latency_mode: LatencyMode::SameSpeaker, ..Default::default() };
    let rows = out.target_rows(&CueDictionary::demo(), &cues).unwrap();
    // Slower agents also post less, so exposure covariates would carry the signal.
    let spec = ModelSpec { exposure: false, ..ModelSpec::new(ModelKind::TruthH2) };
    let ab = ablate_timing(&rows, &spec, 5, 0, &FitOptions::default()).unwrap();
    assert!(ab.delta_auc < -0.05, "{ab:?}");
}

#[test]
fn triad_permutation_separates_planted_from_null() {
    let (planted, _) = planted_h2(PlantedEffect::demo(), 0).single_positive_strata();
    let r = triad_permutation_test(&planted, 5, 0, 100, &FitOptions::default()).unwrap();
    assert!(r.p < 0.01, "p {}", r.p);
    assert!((0.45..=0.65).contains(&r.null_mean), "null mean {}", r.null_mean);
    let (null, _) = planted_h2(PlantedEffect::null(), 0).single_positive_strata();
    let r0 = triad_permutation_test(&null, 5, 0, 100, &FitOptions::default()).unwrap();
    assert!(r0.p > 0.01, "null p {}", r0.p);
}

#[test]
fn cross_validation_is_reproducible_and_seed_sensitive() {
    let ds = planted_h2(PlantedEffect::demo(), 2);
    let a = groupwise_cv(&ds, 5, 9, 10, &FitOptions::default()).unwrap();
    let b = groupwise_cv(&ds, 5, 9, 10, &FitOptions::default()).unwrap();
    assert_eq!(a.oof, b.oof);
    let c = groupwise_cv(&ds, 5, 10, 10, &FitOptions::default()).unwrap();
    assert_ne!(a.fold_of_row, c.fold_of_row);
}
