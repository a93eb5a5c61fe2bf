use std::fs;
use std::path::Path;
use std::time::Instant;

use covert_lab::cues::CueDictionary;
use covert_lab::report::{pipeline_run, Inputs, ReportConfig, Stage};
use covert_lab::sim::{simulate_experiment, PlantedEffect, WorldConfig};

fn world(n: usize, seed: u64) -> WorldConfig {
    WorldConfig { n_groups: n, seed, planted: PlantedEffect::demo(), ..Default::default() }
}

fn inputs(n: usize, seed: u64) -> Inputs {
    let out = simulate_experiment(&world(n, seed), &CueDictionary::demo()).unwrap();
    Inputs::from_sim(&out).unwrap()
}

fn quick() -> ReportConfig {
    let mut cfg = ReportConfig::default();
    cfg.sdt.n_boot = 100;
    cfg.evaluate.n_perm = 20;
    cfg.evaluate.top1_iters = 100;
    cfg.rsa.n_boot = 20;
    cfg.rsa.n_perm = 50;
    cfg.text.n_boot = 20;
    cfg
}

fn csv_cell(path: &Path, key_cols: &[(&str, &str)], col: &str) -> Option<String> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let h = r.headers().unwrap().clone();
    let idx = |name: &str| h.iter().position(|c| c == name).unwrap();
    r.records()
        .map(|x| x.unwrap())
        .find(|rec| key_cols.iter().all(|(k, v)| &rec[idx(k)] == *v))
        .map(|rec| rec[idx(col)].to_string())
}

#[test]
fn full_report_writes_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let m = pipeline_run(&quick(), &inputs(149, 3), dir.path(), "report").unwrap();
    assert!(m.failed_stage.is_none());
    for f in [
        "cues.csv",
        "merged.csv",
        "confusion.csv",
        "sdt.csv",
        "participants.csv",
        "models.csv",
        "coefficients.csv",
        "vif.csv",
        "evaluate.csv",
        "cv_folds.csv",
        "roc.csv",
        "calibration.csv",
        "permutation.csv",
        "rsa.csv",
        "mds_summary.csv",
        "mds_cue.csv",
        "text_descriptives.csv",
        "ctfidf.csv",
        "roc.svg",
        "dprime_forest.svg",
        "report.md",
        "manifest.json",
    ] {
        assert!(dir.path().join(f).exists(), "missing {f}");
    }
    for o in &m.outputs {
        let bytes = fs::read(dir.path().join(&o.path)).unwrap();
        assert_eq!(covert_lab::report::sha256_hex(&bytes), o.sha256, "{}", o.path);
    }
    let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains(&m.config_sha256));
    let auc: f64 =
        csv_cell(&dir.path().join("evaluate.csv"), &[("model", "truth_h2"), ("metric", "cv_auc_mean")], "value")
            .unwrap()
            .parse()
            .unwrap();
    assert!(auc > 0.85, "planted world AUC {auc}");
}

#[test]
fn same_inputs_and_seed_give_identical_artifacts() {
    let inp = inputs(40, 5);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = pipeline_run(&quick(), &inp, a.path(), "report").unwrap();
    let mb = pipeline_run(&quick(), &inp, b.path(), "report").unwrap();
    assert_eq!(ma, mb);
    assert_eq!(fs::read(a.path().join("manifest.json")).unwrap(), fs::read(b.path().join("manifest.json")).unwrap());
}

#[test]
fn different_seed_changes_resampled_outputs_only() {
    let inp = inputs(40, 5);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut cfg = quick();
    cfg.stages = vec![Stage::Sdt];
    pipeline_run(&cfg, &inp, a.path(), "report").unwrap();
    cfg.seed = 1;
    pipeline_run(&cfg, &inp, b.path(), "report").unwrap();
    assert_eq!(fs::read(a.path().join("confusion.csv")).unwrap(), fs::read(b.path().join("confusion.csv")).unwrap());
    assert_ne!(fs::read(a.path().join("sdt.csv")).unwrap(), fs::read(b.path().join("sdt.csv")).unwrap());
}

#[test]
fn exported_tables_reproduce_the_log_analysis() {
    let inp = inputs(30, 9);
    let tables = tempfile::tempdir().unwrap();
    inp.write_tables(tables.path()).unwrap();
    let back = Inputs::load(tables.path(), false).unwrap();
    assert_eq!(back.groups, inp.groups);
    assert_eq!(back.judgments, inp.judgments);
    let mut cfg = quick();
    cfg.stages = vec![Stage::Sdt, Stage::Regress];
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    pipeline_run(&cfg, &inp, a.path(), "report").unwrap();
    pipeline_run(&cfg, &back, b.path(), "report").unwrap();
    for f in ["cues.csv", "sdt.csv", "coefficients.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn empty_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let err = pipeline_run(&quick(), &Inputs::default(), dir.path(), "report").unwrap_err();
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().contains("nothing to report"));
}

#[test]
fn failing_stage_is_named_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = quick();
    cfg.stages = vec![Stage::Sdt, Stage::Evaluate];
    cfg.evaluate.folds = 500;
    assert!(pipeline_run(&cfg, &inputs(12, 2), dir.path(), "report").is_err());
    let m: covert_lab::report::RunManifest =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m.failed_stage.as_deref(), Some("evaluate"));
    assert!(m.outputs.iter().any(|o| o.path == "sdt.csv"));
}

#[test]
fn full_scale_report_runs_under_a_minute() {
    let inp = inputs(149, 0);
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    pipeline_run(&ReportConfig::default(), &inp, dir.path(), "report").unwrap();
    let secs = t.elapsed().as_secs_f64();
    assert!(secs < 60.0, "report took {secs:.1}s");
}

#[test]
fn separating_models_are_reported_not_fatal() {
    // Forty groups of a strongly planted world leave too few triads for the
    // truth model; it separates, and the rest of the report still runs.
    let dir = tempfile::tempdir().unwrap();
    let m = pipeline_run(&quick(), &inputs(40, 5), dir.path(), "report").unwrap();
    assert!(m.failed_stage.is_none());
    assert!(m.model_failures.iter().any(|f| f.starts_with("truth_h2")), "{:?}", m.model_failures);
    let note = csv_cell(&dir.path().join("models.csv"), &[("model", "truth_h2")], "note").unwrap();
    assert!(note.contains("separat"), "{note}");
    assert!(dir.path().join("rsa.csv").exists());
}
