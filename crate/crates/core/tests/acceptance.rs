//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use covert_lab::agent::{
    arbitrate_collision, decide_speak, schedule_next_scan, AgentState, ParticipationScheduler, SchedulerConfig,
};
use covert_lab::cues::{extract_profiles, merge, CueConfig, CueDictionary, Feature};
use covert_lab::model::Role;
use covert_lab::modeling::{
    ablate_timing, calibration, fit_conditional_logistic, fit_group_fixed_effects, fit_logistic, fit_logit,
    groupwise_cv, judgment_dataset, top1_identification, triad_permutation_test, truth_dataset, ClusterLevel,
    FitOptions, FixedEffectsLink, ModelKind, ModelSpec,
};
use covert_lab::report::{pipeline_run, Inputs, ReportConfig};
use covert_lab::rsa::{aggregate_targets, build_rdm, mds_embed, rsa_correlation, Rdm, Space};
use covert_lab::sdt::{corrected_rate, participant_dprimes, sdt, sdt_from_counts, DenominatorMode, SdtCounts};
use covert_lab::sim::{simulate_experiment, AgentTiming, PlantedEffect, WorldConfig};
use covert_lab::textstats::{cramers_v, fit_multinomial, mutual_information_table, ContingencyTable, TopicEncoding};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn dm(x: &common::Mat) -> DMatrix<f64> {
    DMatrix::from_fn(x.len(), x[0].len(), |i, j| x[i][j])
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("x{j}")).collect()
}

fn h2_world(planted: PlantedEffect, n: usize, seed: u64) -> WorldConfig {
    WorldConfig { n_groups: n, seed, planted, ..Default::default() }.with_conditions(&["H2_S", "H2_C"])
}

fn sdt_published() -> Outcome {
    let t = Instant::now();
    let c = SdtCounts {
        ai_as_ai: 217,
        ai_as_human: 358,
        ai_not_sure: 110,
        human_as_ai: 245,
        human_as_human: 495,
        human_not_sure: 147,
    };
    let r = sdt_from_counts(&c, DenominatorMode::IncludeNotSure).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    ensure!((r.d_prime - 0.117).abs() <= 0.01, "d′ {:.4}", r.d_prime);
    ensure!((r.beta - 1.065).abs() <= 0.01, "β {:.4}", r.beta);
    for (got, want) in [(r.hit_ci.0, 0.283), (r.hit_ci.1, 0.353), (r.fa_ci.0, 0.248), (r.fa_ci.1, 0.307)] {
        ensure!((got - want).abs() <= 0.002, "Wilson bound {got:.4} vs {want}");
    }
    ensure!(secs < 1.0, "{secs:.3} s");
    Ok(format!(
        "d′ {:.4}, β {:.4}, H CI [{:.3}, {:.3}], F CI [{:.3}, {:.3}], {:.1} ms",
        r.d_prime,
        r.beta,
        r.hit_ci.0,
        r.hit_ci.1,
        r.fa_ci.0,
        r.fa_ci.1,
        secs * 1e3
    ))
}

fn sdt_consistency() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..500 {
        let mut draw = || rng.random_range(1..300u64);
        let c = SdtCounts {
            ai_as_ai: draw(),
            ai_as_human: draw(),
            ai_not_sure: draw(),
            human_as_ai: draw(),
            human_as_human: draw(),
            human_not_sure: draw(),
        };
        let a = sdt_from_counts(&c, DenominatorMode::IncludeNotSure).map_err(|e| e.to_string())?;
        let b = sdt_from_counts(&c.swap_truth(), DenominatorMode::IncludeNotSure).map_err(|e| e.to_string())?;
        ensure!(a.d_prime == -b.d_prime, "swap gives {} and {}", a.d_prime, b.d_prime);
    }
    for n in 1..100u64 {
        for k in 0..=n {
            let fired = corrected_rate(k, n) != k as f64 / n as f64;
            ensure!(fired == (k == 0 || k == n), "correction at {k}/{n}");
        }
    }
    let mut n_groups = 1000;
    let out = loop {
        let out = simulate_experiment(&WorldConfig { n_groups, seed: 7, ..Default::default() }, &CueDictionary::demo())
            .map_err(|e| e.to_string())?;
        if out.judgments.len() >= 10_000 {
            break out;
        }
        n_groups *= 2;
    };
    let pooled = sdt(&out.judgments, DenominatorMode::IncludeNotSure).map_err(|e| e.to_string())?;
    let per = participant_dprimes(&out.judgments, DenominatorMode::IncludeNotSure).map_err(|e| e.to_string())?;
    ensure!(pooled.d_prime.abs() < 0.05, "chance d′ {}", pooled.d_prime);
    ensure!(per.mean.abs() < 0.05, "participant mean d′ {}", per.mean);
    Ok(format!(
        "antisymmetry exact; chance world {} judgments: d′ {:+.4}, participant mean {:+.4}",
        out.judgments.len(),
        pooled.d_prime,
        per.mean
    ))
}

fn regression_oracles() -> Outcome {
    let opts = FitOptions::default();
    let (mut db, mut dse, mut dcl) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..25 {
        let d = common::logit_dataset(seed);
        let p = d.x[0].len();
        let fit = fit_logit(&dm(&d.x), &d.y, &names(p), &opts).map_err(|e| e.to_string())?;
        let (b, _) = common::newton_logit(&d.x, &d.y);
        let res = fit_logistic(&dm(&d.x), &d.y, &names(p), &[0], Some((&d.clusters, ClusterLevel::Group)), &opts)
            .map_err(|e| e.to_string())?;
        let v = common::sandwich(&d.x, &d.y, &b, &d.clusters);
        for j in 0..p {
            db = db.max((fit.coef[j] - b[j]).abs());
            dse = dse.max((res.coefficients[j].se - v[j][j].sqrt()).abs());
        }
        let k = 1 + seed as usize % 4;
        let (x, y, s) = common::triad_dataset(seed, 60, k);
        let strata: Vec<String> = s.iter().map(|g| format!("g{g}")).collect();
        let cl = fit_conditional_logistic(&dm(&x), &y, &strata, &names(k), &opts).map_err(|e| e.to_string())?;
        let fe = fit_group_fixed_effects(&dm(&x), &y, &strata, &names(k), FixedEffectsLink::Poisson, &opts)
            .map_err(|e| e.to_string())?;
        for j in 0..k {
            dcl = dcl.max((cl.coefficients[j].estimate - fe[j].estimate).abs());
        }
    }
    ensure!(db < 1e-6 && dse < 1e-8 && dcl < 1e-4, "max |Δβ| {db:.1e}, |ΔSE| {dse:.1e}, |Δclogit−FE| {dcl:.1e}");
    Ok(format!("max |Δβ| {db:.1e}, |ΔSE| {dse:.1e}, |Δclogit−FE| {dcl:.1e}"))
}

fn diagnosticity() -> Outcome {
    let t = Instant::now();
    let opts = FitOptions::default();
    let dict = CueDictionary::demo();
    let planted = PlantedEffect::demo();
    let shifted = planted.shifts.values().filter(|v| (1.0..=2.0).contains(&v.abs())).count();
    ensure!(shifted >= 3, "only {shifted} planted shifts in 1–2 SD");
    let out = simulate_experiment(&h2_world(planted, 149, 0), &dict).map_err(|e| e.to_string())?;
    let rows = out.target_rows(&dict, &CueConfig::default()).map_err(|e| e.to_string())?;
    let ds = truth_dataset(&rows, &ModelSpec::new(ModelKind::TruthH2), &[]).map_err(|e| e.to_string())?;
    let (ds, _) = ds.single_positive_strata();
    let triads = ds.groups.iter().collect::<std::collections::BTreeSet<_>>().len();
    let cv = groupwise_cv(&ds, 5, 0, 10, &opts).map_err(|e| e.to_string())?;
    let scores: Vec<f64> = cv.oof.iter().map(|p| p.unwrap_or(f64::NEG_INFINITY)).collect();
    let top1 = top1_identification(&ds.groups, &scores, &ds.y, 1000, 0).map_err(|e| e.to_string())?;
    let perm = triad_permutation_test(&ds, 5, 0, 200, &opts).map_err(|e| e.to_string())?;

    let (_, profiles) = extract_profiles(&dict, &out.groups, &out.utterances, &CueConfig::default());
    let (merged, _) = merge(&out.judgments, &out.groups, &profiles, &[]);
    let jds = judgment_dataset(&merged, &ModelSpec::new(ModelKind::AiVsHuman), &[]).map_err(|e| e.to_string())?;
    let judged = groupwise_cv(&jds, 5, 0, 10, &opts).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();

    let summary = format!(
        "{triads} triads: CV AUC {:.3}, Top-1 {:.3}, perm p {:.4} (null mean {:.3}); RandomGuess judgment AUC {:.3}; {secs:.1} s",
        cv.mean.auc, top1.accuracy, perm.p, perm.null_mean, judged.mean.auc
    );
    ensure!(triads == 149, "{summary}");
    ensure!(cv.mean.auc >= 0.95 && top1.accuracy >= 0.90, "{summary}");
    ensure!(perm.p < 0.01 && (0.45..=0.65).contains(&perm.null_mean), "{summary}");
    ensure!((judged.mean.auc - 0.5).abs() <= 0.07, "{summary}");
    ensure!(secs < 60.0, "{summary}");
    Ok(summary)
}

fn timing_ablation() -> Outcome {
    let planted = PlantedEffect::demo();
    ensure!(planted.shift("latency_mean_s") == 0.0 && planted.shift("latency_var_s") == 0.0, "timing shift planted");
    let dict = CueDictionary::demo();
    let out = simulate_experiment(&h2_world(planted, 149, 0), &dict).map_err(|e| e.to_string())?;
    let rows = out.target_rows(&dict, &CueConfig::default()).map_err(|e| e.to_string())?;
    let ab = ablate_timing(&rows, &ModelSpec::new(ModelKind::TruthH2), 5, 0, &FitOptions::default())
        .map_err(|e| e.to_string())?;
    let s = format!("AUC {:.4} → {:.4}, ΔAUC {:+.4}", ab.auc_full, ab.auc_ablated, ab.delta_auc);
    ensure!(ab.delta_auc.abs() < 0.01, "{s}");
    Ok(s)
}

fn calibration_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p: Vec<f64> = (0..5000).map(|_| rng.random_range(0.02..0.98)).collect();
    let y: Vec<f64> = p.iter().map(|&pi| if rng.random::<f64>() < pi { 1.0 } else { 0.0 }).collect();
    let c = calibration(&p, &y, 10).map_err(|e| e.to_string())?;
    let flat = calibration(&vec![0.4; 5000], &y, 10).map_err(|e| e.to_string())?;
    let s = format!(
        "slope {:.3}, intercept {:+.3}, ECE {:.4}; constant input slope {:.1e}",
        c.slope, c.intercept, c.ece, flat.slope
    );
    ensure!((c.slope - 1.0).abs() <= 0.1 && c.intercept.abs() <= 0.1 && c.ece < 0.03, "{s}");
    ensure!(flat.slope.abs() < 1e-9, "{s}");
    Ok(s)
}

fn rdm_invariants(r: &Rdm) -> Result<(), String> {
    let m = r.to_matrix();
    let hi = match r.space {
        Space::Cue | Space::Impression => 2.0,
        Space::Judgment | Space::Truth | Space::Topic => 1.0,
    };
    for i in 0..r.n {
        ensure!(m[(i, i)] == 0.0, "{} diagonal", r.space.name());
        for j in 0..r.n {
            ensure!(m[(i, j)] == m[(j, i)], "{} asymmetric", r.space.name());
            ensure!((0.0..=hi + 1e-12).contains(&m[(i, j)]), "{} value {}", r.space.name(), m[(i, j)]);
        }
    }
    r.check().map_err(|e| e.to_string())
}

fn rsa_check() -> Outcome {
    let dict = CueDictionary::demo();
    let mut rhos = BTreeMap::new();
    let mut n_rdms = 0;
    for (label, planted) in [("planted", PlantedEffect::demo()), ("null", PlantedEffect::null())] {
        let out = simulate_experiment(&WorldConfig { n_groups: 149, planted, ..Default::default() }, &dict)
            .map_err(|e| e.to_string())?;
        let profiles = out.profiles(&dict, &CueConfig::default());
        let (s, _) = aggregate_targets(&out.judgments, &out.groups, &profiles, &Feature::PREDICTORS, None)
            .map_err(|e| e.to_string())?;
        let mut rdms = BTreeMap::new();
        for space in [Space::Cue, Space::Judgment, Space::Truth, Space::Impression] {
            for d_mid in [0.0, 0.5, 1.0] {
                let r = build_rdm(space, &s, d_mid).map_err(|e| e.to_string())?;
                rdm_invariants(&r)?;
                n_rdms += 1;
                rdms.insert((space.name(), (d_mid * 2.0) as u8), r);
            }
        }
        let r = rsa_correlation(&rdms[&("cue", 1)], &rdms[&("truth", 1)], 0, 1999, 0).map_err(|e| e.to_string())?;
        rhos.insert(label, (r.rho, r.p_perm));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<[f64; 2]> = (0..25).map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)]).collect();
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let condensed =
        (0..25).flat_map(|i| (i + 1..25).map(move |j| (i, j))).map(|(i, j)| dist(&pts[i], &pts[j])).collect();
    let rdm = Rdm { n: 25, space: Space::Cue, condensed, d_mid: 0.5 };
    let e = mds_embed(&rdm, 2).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for i in 0..25 {
        for j in 0..25 {
            worst = worst.max((dist(&e.coords[i], &e.coords[j]) - rdm.get(i, j)).abs());
        }
    }
    let (pr, pp) = rhos["planted"];
    let (nr, _) = rhos["null"];
    let s = format!("planted ρ {pr:.3} (p {pp:.4}); null ρ {nr:+.4}; {n_rdms} RDMs valid; MDS error {worst:.1e}");
    ensure!(pr > 0.3 && pp < 0.001 && nr.abs() < 0.05 && worst < 1e-8, "{s}");
    Ok(s)
}

fn scheduler_check() -> Outcome {
    let cfg = SchedulerConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut now, mut gaps) = (0, Vec::new());
    for _ in 0..10_000 {
        let next = schedule_next_scan(&cfg, now, &mut rng);
        gaps.push((next - now) as f64 / 1000.0);
        now = next;
    }
    ensure!(gaps.iter().all(|g| (18.75..=31.25).contains(g)), "gap outside range");
    let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let fresh = AgentState::new(0);
    let speak = (0..10_000).filter(|_| decide_speak(&cfg, &fresh, &mut rng)).count() as f64 / 1e4;
    let pair = ["Bob".to_string(), "Stuart".to_string()];
    let mut bob = 0;
    for _ in 0..10_000 {
        let a = arbitrate_collision(&cfg, &pair, &mut rng);
        ensure!(a.delayed.len() == 1 && a.delayed[0].1 == 10_000, "collision delay {:?}", a.delayed);
        bob += (a.speaker == "Bob") as usize;
    }
    let sel = bob as f64 / 1e4;

    // Live scheduler: agents alone, posting as soon as they are chosen.
    let mut s = ParticipationScheduler::new(cfg.clone(), "g1", &pair, 11);
    let (mut run, mut t, mut delays) = ((String::new(), 0u32), 0, 0);
    while s.scans < 10_000 {
        let before: Vec<Option<u64>> = s.agents().iter().map(|a| a.state.pending_delay_ms).collect();
        for who in s.due(t) {
            run = if run.0 == who { (who.clone(), run.1 + 1) } else { (who.clone(), 1) };
            ensure!(run.1 <= cfg.max_consecutive, "live run of {}", run.1);
            s.on_message(&who);
        }
        for (a, b) in s.agents().iter().zip(&before) {
            if let (Some(due), None) = (a.state.pending_delay_ms, b) {
                ensure!(due == t + 10_000, "delay {}", due - t);
                delays += 1;
            }
        }
        t += cfg.tick_ms;
    }
    // Simulated corpora with scheduler-driven agents.
    let world = WorldConfig { n_groups: 60, agent_timing: AgentTiming::Scheduler, ..Default::default() };
    let out = simulate_experiment(&world, &CueDictionary::demo()).map_err(|e| e.to_string())?;
    let mut longest = 0;
    for g in &out.groups {
        let agents: Vec<&str> =
            g.roster.iter().filter(|p| p.role == Role::Agent).map(|p| p.pseudonym.as_str()).collect();
        let mut msgs: Vec<_> = out.utterances.iter().filter(|u| u.group_id == g.group_id).collect();
        msgs.sort_by_key(|u| u.ts_ms);
        let mut cur = ("", 0u32);
        for u in msgs {
            cur = if cur.0 == u.speaker { (cur.0, cur.1 + 1) } else { (u.speaker.as_str(), 1) };
            if agents.contains(&cur.0) {
                longest = longest.max(cur.1);
            }
        }
    }
    let s = format!(
        "mean gap {mean:.3} s, speak {speak:.3}, selection {sel:.3}, {delays} live delays of 10 s, longest agent run {longest}"
    );
    ensure!((mean - 25.0).abs() <= 0.25 && (speak - 0.5).abs() <= 0.02 && (sel - 0.5).abs() <= 0.02, "{s}");
    ensure!(delays > 0 && longest <= cfg.max_consecutive, "{s}");
    Ok(s)
}

const TOPIC_ZERO: [[f64; 5]; 2] = [[126.0, 240.0, 136.0, 341.0, 91.0], [86.0, 115.0, 105.0, 147.0, 156.0]];

fn text_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let (r, c) = (rng.random_range(2..6), rng.random_range(2..6));
        let counts: Vec<Vec<f64>> = (0..r).map(|_| (0..c).map(|_| rng.random_range(1..40) as f64).collect()).collect();
        let t = ContingencyTable::new(counts.clone());
        let (chi2, v) = common::chi2_v(&counts);
        let got = cramers_v(&t, 0, 0).map_err(|e| e.to_string())?;
        worst = worst.max((got.chi2 - chi2).abs() / chi2.max(1.0)).max((got.v - v).abs());
        worst = worst.max((mutual_information_table(&t) - common::mutual_information(&counts)).abs());
        let fit = fit_multinomial(&t, TopicEncoding::OneHot, 0, 0).map_err(|e| e.to_string())?;
        for (row, p) in counts.iter().zip(&fit.probs) {
            let n: f64 = row.iter().sum();
            for (k, q) in row.iter().zip(p) {
                ensure!((k / n - q).abs() < 1e-8, "saturated fit {q} vs {}", k / n);
            }
        }
    }
    let topic0 = cramers_v(&ContingencyTable::new(TOPIC_ZERO.iter().map(|r| r.to_vec()).collect()), 0, 0)
        .map_err(|e| e.to_string())?;
    let s = format!("oracle error {worst:.1e}; Topic 0 χ²({}) {:.3}, V {:.4}", topic0.df, topic0.chi2, topic0.v);
    ensure!(worst < 1e-10, "{s}");
    ensure!((topic0.v - 0.235).abs() <= 0.01 && (topic0.chi2 - 85.098).abs() < 0.01, "{s}");
    Ok(s)
}

fn csv_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "csv") {
            out.insert(p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap());
        }
    }
    out
}

fn determinism() -> Outcome {
    let world = WorldConfig { n_groups: 60, seed: 9, planted: PlantedEffect::demo(), ..Default::default() };
    let mut cfg = ReportConfig { seed: 9, ..Default::default() };
    cfg.sdt.n_boot = 200;
    cfg.evaluate.n_perm = 50;
    cfg.rsa.n_perm = 200;
    let mut runs = Vec::new();
    for threads in [1, 4, 4] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        pool.install(|| -> Result<(), String> {
            let out = simulate_experiment(&world, &CueDictionary::demo()).map_err(|e| e.to_string())?;
            let inputs = Inputs::from_sim(&out).map_err(|e| e.to_string())?;
            pipeline_run(&cfg, &inputs, dir.path(), "report").map_err(|e| e.to_string())?;
            Ok(())
        })?;
        runs.push(csv_bytes(dir.path()));
    }
    ensure!(runs[0].len() > 20, "only {} CSVs", runs[0].len());
    for (i, r) in runs.iter().enumerate().skip(1) {
        for (name, bytes) in &runs[0] {
            ensure!(r.get(name) == Some(bytes), "{name} differs in run {}", i + 1);
        }
        ensure!(r.len() == runs[0].len(), "run {} wrote a different file set", i + 1);
    }
    Ok(format!("{} CSVs byte-identical across runs on 1, 4 and 4 threads", runs[0].len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("SDT reproduction from published counts", sdt_published),
        ("SDT internal consistency", sdt_consistency),
        ("Regression oracle equivalence", regression_oracles),
        ("Diagnosticity dissociation", diagnosticity),
        ("Timing ablation", timing_ablation),
        ("Calibration", calibration_check),
        ("RSA", rsa_check),
        ("Scheduler conformance", scheduler_check),
        ("Text statistics", text_check),
        ("End-to-end determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", 10 - failed, 10);
    if failed > 0 {
        std::process::exit(1);
    }
}
