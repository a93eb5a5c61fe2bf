//! End-to-end analysis pipeline: cue extraction → merge → SDT, regression,
//! diagnosticity, RSA and text statistics, written as CSV tables, SVG
//! plots, a markdown summary and a checksummed manifest.

pub mod inputs;
pub mod svg;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

pub use inputs::{sha256_hex, Inputs};
use svg::ForestRow;

use crate::cues::{
    extract_profiles, merge, write_merged, write_profiles, CueConfig, CueDictionary, CueProfile, Feature, MergedRow,
};
use crate::error::{Error, Result};
use crate::model::{IdentityJudgment, Truth};
use crate::modeling::{
    ablate_timing, calibration, conditional, feature_vif, groupwise_cv, judgment_dataset, regress, target_rows,
    top1_identification, triad_permutation_test, truth_dataset, ClusterLevel, Dataset, FitOptions, ModelKind,
    ModelSpec, TargetRow,
};
use crate::numeric::derive_seed;
use crate::rsa::{aggregate_targets, build_rdm, h2_only, mds_embed, rsa_correlation, Space, TargetSummary};
use crate::sdt::{
    bootstrap_dprime_ci, group_compare, participant_dprimes, sdt, stratified, DenominatorMode, SdtResult,
};
use crate::textstats::{
    cramers_v, ctfidf, fit_multinomial, mutual_information_from_table, read_topics, topic_error_odds, LabeledCorpus,
    TopicEncoding,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Sdt,
    Regress,
    Evaluate,
    Rsa,
    Text,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Sdt, Stage::Regress, Stage::Evaluate, Stage::Rsa, Stage::Text];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Sdt => "sdt",
            Stage::Regress => "regress",
            Stage::Evaluate => "evaluate",
            Stage::Rsa => "rsa",
            Stage::Text => "text",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdtBy {
    Overall,
    Task,
    Condition,
    Participant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdtConfig {
    pub mode: DenominatorMode,
    pub by: Vec<SdtBy>,
    pub n_boot: usize,
}

impl Default for SdtConfig {
    fn default() -> Self {
        SdtConfig {
            mode: DenominatorMode::IncludeNotSure,
            by: vec![SdtBy::Overall, SdtBy::Task, SdtBy::Condition, SdtBy::Participant],
            n_boot: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressConfig {
    pub models: Vec<ModelKind>,
    pub cluster: ClusterLevel,
    pub fit: FitOptions,
}

impl Default for RegressConfig {
    fn default() -> Self {
        RegressConfig {
            models: vec![ModelKind::AiVsHuman, ModelKind::NotSureVsHuman, ModelKind::TruthH2],
            cluster: ClusterLevel::Participant,
            fit: FitOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub model: ModelKind,
    /// Judgment model cross-validated alongside for the dissociation.
    pub judgment_model: Option<ModelKind>,
    pub folds: usize,
    pub n_perm: usize,
    pub top1: bool,
    pub top1_iters: usize,
    pub ablate_timing: bool,
    pub bins: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            model: ModelKind::TruthH2,
            judgment_model: Some(ModelKind::AiVsHuman),
            folds: 5,
            n_perm: 200,
            top1: true,
            top1_iters: 1000,
            ablate_timing: true,
            bins: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    All,
    H2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RsaConfig {
    pub spaces: Vec<Space>,
    pub subset: Subset,
    pub d_mid: f64,
    pub n_boot: usize,
    pub n_perm: usize,
    pub mds_spaces: Vec<Space>,
    /// NotSure midpoints re-run (ρ only) to show sensitivity to `d_mid`.
    pub d_mid_sweep: Vec<f64>,
}

impl Default for RsaConfig {
    fn default() -> Self {
        RsaConfig {
            spaces: vec![Space::Cue, Space::Judgment, Space::Truth, Space::Impression],
            subset: Subset::All,
            d_mid: 0.5,
            n_boot: 200,
            n_perm: 1000,
            mds_spaces: vec![Space::Cue, Space::Judgment],
            d_mid_sweep: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextConfig {
    /// CSV of rater_id,group_id,target,topic.
    pub topics: Option<PathBuf>,
    pub top_n: usize,
    pub n_boot: usize,
    pub encoding: TopicEncoding,
    pub ctfidf: bool,
    /// Topic × outcome association statistics (needs `topics`).
    pub assoc: bool,
}

impl Default for TextConfig {
    fn default() -> Self {
        TextConfig { topics: None, top_n: 10, n_boot: 200, encoding: TopicEncoding::OneHot, ctfidf: true, assoc: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub include_incomplete: bool,
    /// Dictionary file; the built-in demo dictionary when absent.
    pub dictionary: Option<PathBuf>,
    pub cues: CueConfig,
    pub sdt: SdtConfig,
    pub regress: RegressConfig,
    pub evaluate: EvaluateConfig,
    pub rsa: RsaConfig,
    pub text: TextConfig,
    /// Write SVG plots next to the tables.
    pub plots: bool,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            seed: 0,
            stages: Stage::ALL.to_vec(),
            include_incomplete: false,
            dictionary: None,
            cues: CueConfig::default(),
            sdt: SdtConfig::default(),
            regress: RegressConfig::default(),
            evaluate: EvaluateConfig::default(),
            rsa: RsaConfig::default(),
            text: TextConfig::default(),
            plots: true,
        }
    }
}

impl ReportConfig {
    /// TOML unless the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let cfg: ReportConfig = if path.extension().and_then(|e| e.to_str()) == Some("json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ReportConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.evaluate.folds < 2 {
            return Err(Error::Config("evaluate.folds must be at least 2".into()));
        }
        if !self.evaluate.model.is_truth() {
            return Err(Error::Config("evaluate.model must be a truth model".into()));
        }
        if self.evaluate.judgment_model.is_some_and(|m| m.is_truth()) {
            return Err(Error::Config("evaluate.judgment_model must be a judgment model".into()));
        }
        if !(0.0..=1.0).contains(&self.rsa.d_mid) || self.rsa.d_mid_sweep.iter().any(|d| !(0.0..=1.0).contains(d)) {
            return Err(Error::Config("rsa.d_mid must lie in [0, 1]".into()));
        }
        Ok(())
    }

    pub fn sha256(&self) -> String {
        sha256_hex(serde_json::to_string(self).expect("config serialises").as_bytes())
    }

    pub fn dictionary(&self) -> Result<CueDictionary> {
        match &self.dictionary {
            Some(p) => CueDictionary::load(p),
            None => Ok(CueDictionary::demo()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub sha256: String,
}

/// What produced an artifact directory. Contains no timestamps, so equal
/// inputs and config give an identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub stages: Vec<Stage>,
    pub inputs: BTreeMap<String, String>,
    pub versions: BTreeMap<String, String>,
    pub outputs: Vec<OutputEntry>,
    /// Models that could not be estimated (separation, singular design…);
    /// the run continues past them.
    pub model_failures: Vec<String>,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

/// p-value for prose: four decimals, floored at `< 0.0001`.
fn fmt_p(p: f64) -> String {
    if p < 1e-4 {
        "< 0.0001".into()
    } else {
        format!("= {p:.4}")
    }
}

/// Formats a number for CSV output; non-finite values become `NA`.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        "NA".into()
    }
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&str]) -> Self {
        Table { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    fn bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| Error::Data(e.to_string()))
    }
}

/// Collects files written into the artifact directory.
struct Out {
    dir: PathBuf,
    files: Vec<OutputEntry>,
    plots: bool,
    summary: String,
    failures: Vec<String>,
}

impl Out {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.files.push(OutputEntry { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    fn table(&mut self, name: &str, t: &Table) -> Result<()> {
        let b = t.bytes()?;
        self.write(name, &b)
    }

    fn plot(&mut self, name: &str, svg: String) -> Result<()> {
        if self.plots {
            self.write(name, svg.as_bytes())?;
        }
        Ok(())
    }

    /// Records a model that could not be estimated; numeric failures are
    /// reported and skipped, anything else aborts the stage.
    fn model_failure(&mut self, model: &str, e: Error) -> Result<()> {
        if e.exit_code() != 4 {
            return Err(e);
        }
        warn!("{model}: {e}");
        self.line(format!("`{model}` could not be estimated: {e}."));
        self.failures.push(format!("{model}: {e}"));
        Ok(())
    }

    fn line(&mut self, s: impl AsRef<str>) {
        self.summary.push_str(s.as_ref());
        self.summary.push('\n');
    }
}

/// Shared per-run derived data.
struct Context<'a> {
    cfg: &'a ReportConfig,
    inputs: &'a Inputs,
    profiles: Vec<CueProfile>,
    merged: Vec<MergedRow>,
    targets: Vec<TargetRow>,
}

/// Runs the configured stages over `inputs`, writing into `out_dir`. A
/// failing stage stops the run; the manifest written so far names it.
pub fn pipeline_run(cfg: &ReportConfig, inputs: &Inputs, out_dir: &Path, command: &str) -> Result<RunManifest> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::Data("nothing to report: the input has no groups and no judgments".into()));
    }
    fs::create_dir_all(out_dir)?;
    let mut manifest = RunManifest {
        command: command.to_string(),
        config_sha256: cfg.sha256(),
        seed: cfg.seed,
        stages: cfg.stages.clone(),
        inputs: inputs.checksums.clone(),
        versions: BTreeMap::from([("covert-lab".to_string(), env!("CARGO_PKG_VERSION").to_string())]),
        outputs: Vec::new(),
        model_failures: Vec::new(),
        failed_stage: None,
        error: None,
    };
    let mut out = Out {
        dir: out_dir.to_path_buf(),
        files: Vec::new(),
        plots: cfg.plots,
        summary: String::new(),
        failures: Vec::new(),
    };
    out.line("# Analysis report");
    out.line("");
    out.line(format!(
        "{} groups, {} messages, {} judgments ({} self-judgments dropped, {} incomplete groups).",
        inputs.groups.len(),
        inputs.utterances.len(),
        inputs.judgments.len(),
        inputs.report.self_judgments_dropped,
        inputs.report.incomplete_groups
    ));

    let result = run_stages(cfg, inputs, &mut out);
    if let Err((stage, e)) = &result {
        manifest.failed_stage = Some(stage.clone());
        manifest.error = Some(e.to_string());
        out.line(format!("\n**Stopped at stage `{stage}`:** {e}"));
    }
    manifest.outputs = out.files.clone();
    manifest.model_failures = out.failures.clone();
    let manifest_json = serde_json::to_string_pretty(&manifest)?;
    let mut md = out.summary.clone();
    let _ = write!(md, "\n## Manifest\n\n```json\n{manifest_json}\n```\n");
    fs::write(out_dir.join("report.md"), md)?;
    fs::write(out_dir.join("manifest.json"), format!("{manifest_json}\n"))?;
    match result {
        Ok(()) => Ok(manifest),
        Err((stage, e)) => {
            warn!("stage {stage} failed: {e}");
            Err(e)
        }
    }
}

fn run_stages(cfg: &ReportConfig, inputs: &Inputs, out: &mut Out) -> std::result::Result<(), (String, Error)> {
    let tag = |stage: &str| {
        let s = stage.to_string();
        move |e: Error| (s.clone(), e)
    };
    let ctx = prepare(cfg, inputs, out).map_err(tag("extract"))?;
    for stage in Stage::ALL.into_iter().filter(|s| cfg.stages.contains(s)) {
        info!("stage {}", stage.name());
        let r = match stage {
            Stage::Sdt => sdt_stage(&ctx, out),
            Stage::Regress => regress_stage(&ctx, out),
            Stage::Evaluate => evaluate_stage(&ctx, out),
            Stage::Rsa => rsa_stage(&ctx, out),
            Stage::Text => text_stage(&ctx, out),
        };
        r.map_err(tag(stage.name()))?;
    }
    Ok(())
}

fn prepare<'a>(cfg: &'a ReportConfig, inputs: &'a Inputs, out: &mut Out) -> Result<Context<'a>> {
    let dict = cfg.dictionary()?;
    let (_, profiles) = extract_profiles(&dict, &inputs.groups, &inputs.utterances, &cfg.cues);
    let mut buf = Vec::new();
    write_profiles(&mut buf, &profiles)?;
    out.write("cues.csv", &buf)?;
    let (merged, report) = merge(&inputs.judgments, &inputs.groups, &profiles, &[]);
    let mut buf = Vec::new();
    write_merged(&mut buf, &merged)?;
    out.write("merged.csv", &buf)?;
    let evaluated = inputs.judgments.iter().map(|j| (j.group_id.clone(), j.target.clone())).collect();
    let targets = target_rows(&inputs.groups, &profiles, Some(&evaluated))?;
    out.line(format!(
        "Cue profiles: {} targets; merged rows: {} of {} judgments; evaluated targets: {}.",
        profiles.len(),
        merged.len(),
        report.judgments,
        targets.len()
    ));
    Ok(Context { cfg, inputs, profiles, merged, targets })
}

const SDT_HEADER: [&str; 19] = [
    "by",
    "stratum",
    "n_ai",
    "n_human",
    "hits",
    "false_alarms",
    "h_raw",
    "f_raw",
    "h_star",
    "f_star",
    "d_prime",
    "beta",
    "hit_lo",
    "hit_hi",
    "fa_lo",
    "fa_hi",
    "dprime_lo",
    "dprime_hi",
    "note",
];

fn sdt_row(by: &str, stratum: &str, r: &Result<SdtResult>, ci: Option<(f64, f64)>) -> Vec<String> {
    match r {
        Ok(r) => {
            let ci = ci.unwrap_or((f64::NAN, f64::NAN));
            vec![
                by.into(),
                stratum.into(),
                r.n_ai.to_string(),
                r.n_human.to_string(),
                r.hits.to_string(),
                r.false_alarms.to_string(),
                num(r.h_raw),
                num(r.f_raw),
                num(r.h_star),
                num(r.f_star),
                num(r.d_prime),
                num(r.beta),
                num(r.hit_ci.0),
                num(r.hit_ci.1),
                num(r.fa_ci.0),
                num(r.fa_ci.1),
                num(ci.0),
                num(ci.1),
                String::new(),
            ]
        }
        Err(e) => {
            let mut row = vec![by.to_string(), stratum.to_string()];
            row.extend(std::iter::repeat_n("NA".to_string(), 16));
            row.push(e.to_string());
            row
        }
    }
}

fn sdt_stage(ctx: &Context, out: &mut Out) -> Result<()> {
    let cfg = &ctx.cfg.sdt;
    let js = &ctx.inputs.judgments;
    if js.is_empty() {
        return Err(Error::Data("no judgments for signal detection".into()));
    }
    let seed = derive_seed(ctx.cfg.seed, &["sdt"]);
    let overall = sdt(js, cfg.mode)?;
    let c = overall.counts;

    let mut conf = Table::new(&["truth", "judgment", "count"]);
    let cells = [
        ("AI", [c.ai_as_ai, c.ai_as_human, c.ai_not_sure]),
        ("Human", [c.human_as_ai, c.human_as_human, c.human_not_sure]),
    ];
    for (t, row) in &cells {
        for (j, n) in IdentityJudgment::ALL.iter().zip(row) {
            conf.push(vec![t.to_string(), j.as_str().to_string(), n.to_string()]);
        }
    }
    out.table("confusion.csv", &conf)?;
    out.plot(
        "confusion.svg",
        svg::heatmap(
            "Identity judgments by truth",
            &["AI", "Human"],
            &["AI", "Human", "Not sure"],
            &cells.iter().map(|(_, r)| r.iter().map(|&v| v as f64).collect()).collect::<Vec<_>>(),
        ),
    )?;

    let mut table = Table::new(&SDT_HEADER);
    let mut forest = Vec::new();
    let boot = |key: &str, r: &Result<SdtResult>| -> Option<(f64, f64)> {
        let r = r.as_ref().ok()?;
        if cfg.n_boot == 0 {
            return None;
        }
        bootstrap_dprime_ci(&r.counts, cfg.mode, cfg.n_boot, derive_seed(seed, &[key])).ok()
    };
    let mut add = |by: &str, stratum: &str, r: Result<SdtResult>, table: &mut Table| {
        let ci = boot(&format!("{by}/{stratum}"), &r);
        if let Ok(res) = &r {
            let (lo, hi) = ci.unwrap_or((f64::NAN, f64::NAN));
            forest.push(ForestRow { label: format!("{by}: {stratum}"), estimate: res.d_prime, lo, hi });
        }
        table.push(sdt_row(by, stratum, &r, ci));
    };
    let groups: BTreeMap<&str, &crate::model::GroupRecord> =
        ctx.inputs.groups.iter().map(|g| (g.group_id.as_str(), g)).collect();
    let group_of = |j: &crate::model::JudgmentRecord| groups.get(j.group_id.as_str()).copied();
    for by in &cfg.by {
        match by {
            SdtBy::Overall => add("overall", "all", Ok(overall.clone()), &mut table),
            SdtBy::Task => {
                for (k, r) in stratified(js, |j| group_of(j).map(|g| g.task.code()).unwrap_or("?"), cfg.mode)? {
                    add("task", k, r, &mut table);
                }
            }
            SdtBy::Condition => {
                for (k, r) in stratified(js, |j| group_of(j).map(|g| g.condition.label()).unwrap_or("?"), cfg.mode)? {
                    add("condition", k, r, &mut table);
                }
            }
            SdtBy::Participant => {}
        }
    }
    out.table("sdt.csv", &table)?;
    out.line("\n## Signal detection\n");
    out.line(format!(
        "Overall ({:?}): H = {:.3}, F = {:.3}, d′ = {:.3}, β = {:.3}.",
        cfg.mode, overall.h_raw, overall.f_raw, overall.d_prime, overall.beta
    ));

    if cfg.by.contains(&SdtBy::Participant) {
        match participant_dprimes(js, cfg.mode) {
            Ok(p) => {
                let mut t = Table::new(&["rater_id", "n_ai", "n_human", "d_prime", "beta"]);
                for (rater, r) in &p.per_rater {
                    t.push(vec![rater.clone(), r.n_ai.to_string(), r.n_human.to_string(), num(r.d_prime), num(r.beta)]);
                }
                out.table("participants.csv", &t)?;
                let mut s = Table::new(&["n_raters", "skipped", "mean_d_prime", "sd", "ci_lo", "ci_hi"]);
                s.push(vec![
                    p.per_rater.len().to_string(),
                    p.skipped.to_string(),
                    num(p.mean),
                    num(p.sd),
                    num(p.ci.0),
                    num(p.ci.1),
                ]);
                out.table("participants_summary.csv", &s)?;
                forest.push(ForestRow { label: "participant mean".into(), estimate: p.mean, lo: p.ci.0, hi: p.ci.1 });
                out.line(format!(
                    "Participant-level mean d′ = {:.3} (95% CI {:.3} to {:.3}; {} raters, {} skipped).",
                    p.mean,
                    p.ci.0,
                    p.ci.1,
                    p.per_rater.len(),
                    p.skipped
                ));
                let rater_cond: BTreeMap<&str, &str> =
                    js.iter().filter_map(|j| group_of(j).map(|g| (j.rater_id.as_str(), g.condition.label()))).collect();
                let mut by_cond: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
                for (rater, r) in &p.per_rater {
                    if let Some(c) = rater_cond.get(rater.as_str()) {
                        by_cond.entry(c).or_default().push(r.d_prime);
                    }
                }
                let groups: Vec<(String, Vec<f64>)> =
                    by_cond.into_iter().filter(|(_, v)| v.len() >= 2).map(|(k, v)| (k.to_string(), v)).collect();
                if groups.len() >= 2 {
                    let cmp = group_compare(&groups)?;
                    let mut t = Table::new(&["condition", "n", "mean_d_prime"]);
                    for ((l, n), m) in cmp.labels.iter().zip(&cmp.n).zip(&cmp.means) {
                        t.push(vec![l.clone(), n.to_string(), num(*m)]);
                    }
                    out.table("dprime_by_condition.csv", &t)?;
                    let mut t = Table::new(&["test", "statistic", "df1", "df2", "p"]);
                    match cmp.test {
                        crate::sdt::Comparison::WelchT { t: tv, df } => {
                            t.push(vec!["welch_t".into(), num(tv), num(df), "NA".into(), num(cmp.p)])
                        }
                        crate::sdt::Comparison::Anova { f, df_between, df_within, .. } => {
                            t.push(vec!["anova".into(), num(f), num(df_between), num(df_within), num(cmp.p)])
                        }
                    }
                    out.table("dprime_comparison.csv", &t)?;
                }
            }
            Err(e) => out.line(format!("Participant-level d′ unavailable: {e}.")),
        }
    }
    out.plot("dprime_forest.svg", svg::forest("d′ by stratum", "d′", &forest, 0.0))?;
    Ok(())
}

fn dataset(ctx: &Context, kind: ModelKind) -> Result<Dataset> {
    let spec = ModelSpec::new(kind);
    if kind.is_truth() {
        truth_dataset(&ctx.targets, &spec, &[])
    } else {
        judgment_dataset(&ctx.merged, &spec, &[])
    }
}

fn coef_table(name: &str, coefs: &[crate::modeling::Coefficient], t: &mut Table) {
    for c in coefs {
        t.push(vec![
            name.into(),
            c.name.clone(),
            num(c.estimate),
            num(c.se),
            num(c.z),
            num(c.p),
            num(c.ci.0),
            num(c.ci.1),
            num(c.estimate.exp()),
        ]);
    }
}

fn regress_stage(ctx: &Context, out: &mut Out) -> Result<()> {
    let cfg = &ctx.cfg.regress;
    out.line("\n## Regression\n");
    let mut models = Table::new(&[
        "model",
        "method",
        "n",
        "dropped",
        "loglik",
        "loglik_null",
        "pseudo_r2",
        "aic",
        "lr_stat",
        "lr_df",
        "lr_p",
        "cluster",
        "n_clusters",
        "note",
    ]);
    let mut coefs = Table::new(&["model", "term", "estimate", "se", "z", "p", "ci_lo", "ci_hi", "odds_ratio"]);
    let mut vifs = Table::new(&["model", "term", "vif"]);
    for &kind in &cfg.models {
        regress_model(ctx, kind, out, &mut models, &mut coefs, &mut vifs)?;
    }
    out.table("models.csv", &models)?;
    out.table("coefficients.csv", &coefs)?;
    out.table("vif.csv", &vifs)?;
    Ok(())
}

fn failed_model_row(name: &str, method: &str, e: &Error) -> Vec<String> {
    let mut row = vec![name.to_string(), method.to_string()];
    row.extend(std::iter::repeat_n("NA".to_string(), 11));
    row.push(e.to_string());
    row
}

fn regress_model(
    ctx: &Context,
    kind: ModelKind,
    out: &mut Out,
    models: &mut Table,
    coefs: &mut Table,
    vifs: &mut Table,
) -> Result<()> {
    let cfg = &ctx.cfg.regress;
    let ds = dataset(ctx, kind)?;
    let cluster =
        if kind.is_truth() && cfg.cluster == ClusterLevel::Participant { ClusterLevel::Group } else { cfg.cluster };
    for (term, v) in feature_vif(&ds)? {
        vifs.push(vec![kind.name().into(), term, num(v)]);
    }
    match regress(&ds, cluster, &cfg.fit) {
        Ok(fit) => {
            models.push(vec![
                kind.name().into(),
                "logistic".into(),
                fit.n.to_string(),
                ds.dropped.to_string(),
                num(fit.loglik),
                num(fit.loglik_null),
                num(fit.pseudo_r2),
                num(fit.aic),
                num(fit.lr_stat),
                fit.lr_df.to_string(),
                num(fit.lr_p),
                format!("{:?}", fit.cluster_level).to_lowercase(),
                fit.n_clusters.map(|g| g.to_string()).unwrap_or_else(|| "NA".into()),
                String::new(),
            ]);
            coef_table(kind.name(), &fit.coefficients, coefs);
            let rows: Vec<ForestRow> = fit
                .coefficients
                .iter()
                .filter(|c| c.name != "(intercept)")
                .map(|c| ForestRow { label: c.name.clone(), estimate: c.estimate, lo: c.ci.0, hi: c.ci.1 })
                .collect();
            out.plot(
                &format!("coef_{}.svg", kind.name()),
                svg::forest(&format!("{} coefficients", kind.name()), "log-odds (95% CI)", &rows, 0.0),
            )?;
            out.line(format!(
                "`{}`: n = {}, LR χ²({}) = {:.2}, p {}, pseudo-R² = {:.3}.",
                kind.name(),
                fit.n,
                fit.lr_df,
                fit.lr_stat,
                fmt_p(fit.lr_p),
                fit.pseudo_r2
            ));
        }
        Err(e) => {
            models.push(failed_model_row(kind.name(), "logistic", &e));
            out.model_failure(kind.name(), e)?;
        }
    }
    if kind == ModelKind::TruthH2 {
        let (strict, dropped) = ds.single_positive_strata();
        if !dropped.is_empty() {
            warn!("conditional logit: {} group(s) without exactly one AI row dropped", dropped.len());
        }
        let name = format!("{}_conditional", kind.name());
        match conditional(&strict, &cfg.fit) {
            Ok(cl) => {
                models.push(vec![
                    name.clone(),
                    "conditional_logit".into(),
                    cl.n.to_string(),
                    (ds.dropped + ds.n() - strict.n()).to_string(),
                    num(cl.loglik),
                    num(cl.loglik_null),
                    num(1.0 - cl.loglik / cl.loglik_null),
                    num(-2.0 * cl.loglik + 2.0 * cl.coefficients.len() as f64),
                    num(2.0 * (cl.loglik - cl.loglik_null)),
                    cl.coefficients.len().to_string(),
                    "NA".into(),
                    "strata".into(),
                    cl.n_strata.to_string(),
                    String::new(),
                ]);
                coef_table(&name, &cl.coefficients, coefs);
            }
            Err(e) => {
                models.push(failed_model_row(&name, "conditional_logit", &e));
                out.model_failure(&name, e)?;
            }
        }
    }
    Ok(())
}

/// (threshold, fpr, tpr) points of the empirical ROC curve.
pub fn roc_points(p: &[f64], y: &[f64]) -> Vec<(f64, f64, f64)> {
    let pos = y.iter().filter(|&&v| v == 1.0).count() as f64;
    let neg = y.len() as f64 - pos;
    let mut idx: Vec<usize> = (0..p.len()).collect();
    idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let mut pts = vec![(f64::INFINITY, 0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut k = 0;
    while k < idx.len() {
        let t = p[idx[k]];
        while k < idx.len() && p[idx[k]] == t {
            if y[idx[k]] == 1.0 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            k += 1;
        }
        pts.push((t, if neg > 0.0 { fp / neg } else { f64::NAN }, if pos > 0.0 { tp / pos } else { f64::NAN }));
    }
    pts
}

fn evaluate_stage(ctx: &Context, out: &mut Out) -> Result<()> {
    let cfg = &ctx.cfg.evaluate;
    let seed = derive_seed(ctx.cfg.seed, &["evaluate"]);
    out.line("\n## Diagnosticity\n");
    let mut metrics = Table::new(&["model", "metric", "value", "ci_lo", "ci_hi"]);
    let mut folds = Table::new(&["model", "fold", "n_test", "auc", "brier", "slope", "intercept", "ece"]);
    let mut roc = Table::new(&["model", "threshold", "fpr", "tpr"]);
    let mut cal = Table::new(&["model", "bin", "confidence", "accuracy", "count"]);
    let mut roc_series = Vec::new();
    let mut cal_series = Vec::new();

    let mut models = vec![cfg.model];
    models.extend(cfg.judgment_model);
    for kind in models {
        let mut tables = EvalTables {
            metrics: &mut metrics,
            folds: &mut folds,
            roc: &mut roc,
            cal: &mut cal,
            roc_series: &mut roc_series,
            cal_series: &mut cal_series,
        };
        if let Err(e) = evaluate_model(ctx, kind, seed, out, &mut tables) {
            out.model_failure(kind.name(), e)?;
        }
    }
    out.table("evaluate.csv", &metrics)?;
    out.table("cv_folds.csv", &folds)?;
    out.table("roc.csv", &roc)?;
    out.table("calibration.csv", &cal)?;
    out.plot(
        "roc.svg",
        svg::curves("ROC (out-of-fold)", "false positive rate", "true positive rate", &roc_series, true),
    )?;
    out.plot(
        "reliability.svg",
        svg::curves("Reliability (out-of-fold)", "predicted probability", "observed frequency", &cal_series, true),
    )?;
    Ok(())
}

struct EvalTables<'a> {
    metrics: &'a mut Table,
    folds: &'a mut Table,
    roc: &'a mut Table,
    cal: &'a mut Table,
    roc_series: &'a mut Vec<(&'static str, Vec<(f64, f64)>)>,
    cal_series: &'a mut Vec<(&'static str, Vec<(f64, f64)>)>,
}

fn evaluate_model(ctx: &Context, kind: ModelKind, seed: u64, out: &mut Out, t: &mut EvalTables) -> Result<()> {
    let cfg = &ctx.cfg.evaluate;
    let fit = &ctx.cfg.regress.fit;
    let (metrics, folds, roc, cal, roc_series, cal_series) =
        (&mut *t.metrics, &mut *t.folds, &mut *t.roc, &mut *t.cal, &mut *t.roc_series, &mut *t.cal_series);
    let ds = dataset(ctx, kind)?;
    let cv = groupwise_cv(&ds, cfg.folds, seed, cfg.bins, fit)?;
    for f in &cv.folds {
        let m = &f.metrics;
        folds.push(vec![
            kind.name().into(),
            f.fold.to_string(),
            f.n_test.to_string(),
            num(m.auc),
            num(m.brier),
            num(m.slope),
            num(m.intercept),
            num(m.ece),
        ]);
    }
    for (label, m) in [("mean", &cv.mean), ("sd", &cv.sd), ("pooled", &cv.pooled)] {
        folds.push(vec![
            kind.name().into(),
            label.into(),
            ds.n().to_string(),
            num(m.auc),
            num(m.brier),
            num(m.slope),
            num(m.intercept),
            num(m.ece),
        ]);
    }
    let (p, y): (Vec<f64>, Vec<f64>) = cv.oof.iter().zip(&ds.y).filter_map(|(p, y)| p.map(|p| (p, *y))).unzip();
    let pts = roc_points(&p, &y);
    for &(t, fpr, tpr) in &pts {
        roc.push(vec![kind.name().into(), num(t), num(fpr), num(tpr)]);
    }
    roc_series.push((kind.name(), pts.iter().map(|&(_, x, y)| (x, y)).collect::<Vec<_>>()));
    let c = calibration(&p, &y, cfg.bins)?;
    for (b, bin) in c.curve.iter().enumerate() {
        cal.push(vec![
            kind.name().into(),
            b.to_string(),
            num(bin.confidence),
            num(bin.accuracy),
            bin.count.to_string(),
        ]);
    }
    cal_series.push((kind.name(), c.curve.iter().map(|b| (b.confidence, b.accuracy)).collect::<Vec<_>>()));
    for (name, v) in [
        ("cv_auc_mean", cv.mean.auc),
        ("cv_auc_sd", cv.sd.auc),
        ("cv_brier_mean", cv.mean.brier),
        ("cv_ece_mean", cv.mean.ece),
        ("skipped_folds", cv.skipped_folds as f64),
    ] {
        metrics.push(vec![kind.name().into(), name.into(), num(v), "NA".into(), "NA".into()]);
    }
    out.line(format!(
        "`{}`: {}-fold group CV AUC = {:.3} (sd {:.3}), Brier = {:.3}, ECE = {:.3}.",
        kind.name(),
        cfg.folds,
        cv.mean.auc,
        cv.sd.auc,
        cv.mean.brier,
        cv.mean.ece
    ));

    if kind.is_truth() {
        let (strict, dropped) = ds.single_positive_strata();
        metrics.push(vec![
            kind.name().into(),
            "strata_dropped".into(),
            dropped.len().to_string(),
            "NA".into(),
            "NA".into(),
        ]);
        if cfg.top1 {
            let scv = groupwise_cv(&strict, cfg.folds, seed, cfg.bins, fit)?;
            let scores: Vec<f64> = scv.oof.iter().map(|p| p.unwrap_or(f64::NEG_INFINITY)).collect();
            let top1 = top1_identification(&strict.groups, &scores, &strict.y, cfg.top1_iters, seed)?;
            metrics.push(vec![kind.name().into(), "top1".into(), num(top1.accuracy), num(top1.ci.0), num(top1.ci.1)]);
            metrics.push(vec![kind.name().into(), "top1_chance".into(), num(top1.chance), "NA".into(), "NA".into()]);
            out.line(format!(
                "Top-1 identification: {:.3} (95% CI {:.3}–{:.3}; chance {:.3}, {} triads).",
                top1.accuracy, top1.ci.0, top1.ci.1, top1.chance, top1.n_triads
            ));
        }
        if cfg.n_perm > 0 {
            let perm = triad_permutation_test(&strict, cfg.folds, seed, cfg.n_perm, fit)?;
            let mut t = Table::new(&["permutation", "auc"]);
            for (i, v) in perm.null.iter().enumerate() {
                t.push(vec![i.to_string(), num(*v)]);
            }
            out.table("permutation.csv", &t)?;
            let (edges, counts) = svg::bin(&perm.null, 20);
            let mut h = Table::new(&["bin_lo", "bin_hi", "count"]);
            for (k, c) in counts.iter().enumerate() {
                h.push(vec![num(edges[k]), num(edges[k + 1]), c.to_string()]);
            }
            out.table("permutation_hist.csv", &h)?;
            out.plot(
                "permutation.svg",
                svg::histogram(
                    "Triad label permutation null",
                    "cross-validated AUC",
                    &edges,
                    &counts,
                    Some(perm.observed),
                ),
            )?;
            for (name, v, lo, hi) in [
                ("perm_observed_auc", perm.observed, f64::NAN, f64::NAN),
                ("perm_null_mean", perm.null_mean, perm.null_interval.0, perm.null_interval.1),
                ("perm_null_sd", perm.null_sd, f64::NAN, f64::NAN),
                ("perm_p", perm.p, f64::NAN, f64::NAN),
                ("perm_failed", perm.failed as f64, f64::NAN, f64::NAN),
            ] {
                metrics.push(vec![kind.name().into(), name.into(), num(v), num(lo), num(hi)]);
            }
            out.line(format!(
                "Triad permutation ({} draws): null AUC mean {:.3}, p {}.",
                perm.n_perm,
                perm.null_mean,
                fmt_p(perm.p)
            ));
        }
        if cfg.ablate_timing {
            let ab = ablate_timing(&ctx.targets, &ModelSpec::new(kind), cfg.folds, seed, fit)?;
            for (name, v) in
                [("auc_full", ab.auc_full), ("auc_without_timing", ab.auc_ablated), ("delta_auc", ab.delta_auc)]
            {
                metrics.push(vec![kind.name().into(), name.into(), num(v), "NA".into(), "NA".into()]);
            }
            out.line(format!("Timing ablation: ΔAUC = {:+.4}.", ab.delta_auc));
        }
    }
    Ok(())
}

/// Distance between class centroids over the RMS spread around the grand
/// centroid.
pub fn centroid_separation(coords: &[Vec<f64>], is_ai: &[bool]) -> f64 {
    let dims = coords.first().map_or(0, |c| c.len());
    let centroid = |sel: &dyn Fn(usize) -> bool| -> Vec<f64> {
        let idx: Vec<usize> = (0..coords.len()).filter(|&i| sel(i)).collect();
        (0..dims).map(|d| idx.iter().map(|&i| coords[i][d]).sum::<f64>() / idx.len().max(1) as f64).collect()
    };
    let a = centroid(&|i| is_ai[i]);
    let h = centroid(&|i| !is_ai[i]);
    let g = centroid(&|_| true);
    let spread = (coords.iter().map(|c| c.iter().zip(&g).map(|(x, m)| (x - m).powi(2)).sum::<f64>()).sum::<f64>()
        / coords.len().max(1) as f64)
        .sqrt();
    let dist = a.iter().zip(&h).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    if spread > 0.0 {
        dist / spread
    } else {
        f64::NAN
    }
}

fn rsa_stage(ctx: &Context, out: &mut Out) -> Result<()> {
    let cfg = &ctx.cfg.rsa;
    let topics = match &ctx.cfg.text.topics {
        Some(p) => Some(read_topics(p)?),
        None => None,
    };
    let (mut summaries, report) = aggregate_targets(
        &ctx.inputs.judgments,
        &ctx.inputs.groups,
        &ctx.profiles,
        &Feature::PREDICTORS,
        topics.as_ref(),
    )?;
    if cfg.subset == Subset::H2 {
        summaries = h2_only(&summaries);
    }
    out.line("\n## Representational similarity\n");
    out.line(format!(
        "{} targets kept of {} rated ({} missing cues).",
        summaries.len(),
        report.targets_rated,
        report.missing_cues
    ));
    let spaces: Vec<Space> = cfg.spaces.iter().copied().filter(|s| *s != Space::Topic || topics.is_some()).collect();
    let mut rdms = BTreeMap::new();
    for &s in &spaces {
        let rdm = build_rdm(s, &summaries, cfg.d_mid)?;
        rdm.check()?;
        rdms.insert(s.name(), rdm);
    }
    let seed = derive_seed(ctx.cfg.seed, &["rsa"]);
    let mut t = Table::new(&["space_a", "space_b", "rho", "ci_lo", "ci_hi", "p_perm", "n_targets"]);
    for (i, a) in spaces.iter().enumerate() {
        for b in &spaces[i + 1..] {
            match rsa_correlation(&rdms[a.name()], &rdms[b.name()], cfg.n_boot, cfg.n_perm, seed) {
                Ok(r) => {
                    t.push(vec![
                        a.name().into(),
                        b.name().into(),
                        num(r.rho),
                        num(r.boot_ci.0),
                        num(r.boot_ci.1),
                        num(r.p_perm),
                        r.n_targets.to_string(),
                    ]);
                    out.line(format!(
                        "{} ↔ {}: ρ = {:.3}, permutation p {}.",
                        a.name(),
                        b.name(),
                        r.rho,
                        fmt_p(r.p_perm)
                    ));
                }
                Err(e) => {
                    warn!("RSA {}–{}: {e}", a.name(), b.name());
                    t.push(vec![
                        a.name().into(),
                        b.name().into(),
                        "NA".into(),
                        "NA".into(),
                        "NA".into(),
                        "NA".into(),
                        summaries.len().to_string(),
                    ]);
                }
            }
        }
    }
    out.table("rsa.csv", &t)?;
    if rdms.contains_key(Space::Judgment.name()) && !cfg.d_mid_sweep.is_empty() {
        let mut sweep = Table::new(&["d_mid", "other_space", "rho"]);
        for &d in &cfg.d_mid_sweep {
            let j = build_rdm(Space::Judgment, &summaries, d)?;
            for s in spaces.iter().filter(|s| **s != Space::Judgment) {
                let rho = rsa_correlation(&j, &rdms[s.name()], 0, 0, seed).map(|r| r.rho).unwrap_or(f64::NAN);
                sweep.push(vec![num(d), s.name().into(), num(rho)]);
            }
        }
        out.table("rsa_dmid_sweep.csv", &sweep)?;
    }
    let mut mds = Table::new(&["space", "stress", "eigen_1", "eigen_2", "centroid_separation"]);
    for s in &cfg.mds_spaces {
        let Some(rdm) = rdms.get(s.name()) else { continue };
        let emb = mds_embed(rdm, 2)?;
        let is_ai: Vec<bool> = summaries.iter().map(|x| x.truth == Truth::AI).collect();
        let sep = centroid_separation(&emb.coords, &is_ai);
        mds.push(vec![
            s.name().into(),
            num(emb.stress),
            num(emb.eigenvalues[0]),
            num(emb.eigenvalues.get(1).copied().unwrap_or(f64::NAN)),
            num(sep),
        ]);
        let mut c = Table::new(&["group_id", "target", "truth", "modal_judgment", "dim1", "dim2"]);
        for (x, xy) in summaries.iter().zip(&emb.coords) {
            c.push(vec![
                x.group_id.clone(),
                x.target.clone(),
                x.truth.as_str().into(),
                x.modal_judgment.as_str().into(),
                num(xy[0]),
                num(xy.get(1).copied().unwrap_or(0.0)),
            ]);
        }
        out.table(&format!("mds_{}.csv", s.name()), &c)?;
        let pts: Vec<(f64, f64, usize)> = emb
            .coords
            .iter()
            .zip(&summaries)
            .map(|(xy, x): (&Vec<f64>, &TargetSummary)| {
                (xy[0], xy.get(1).copied().unwrap_or(0.0), (x.truth == Truth::Human) as usize)
            })
            .collect();
        out.plot(
            &format!("mds_{}.svg", s.name()),
            svg::scatter(&format!("MDS of {} space", s.name()), &pts, &["AI", "Human"]),
        )?;
        out.line(format!("MDS {}: stress {:.3}, AI/human centroid separation {:.3}.", s.name(), emb.stress, sep));
    }
    out.table("mds_summary.csv", &mds)?;
    Ok(())
}

fn text_stage(ctx: &Context, out: &mut Out) -> Result<()> {
    let cfg = &ctx.cfg.text;
    let topics = match &cfg.topics {
        Some(p) => Some(read_topics(p)?),
        None => None,
    };
    let corpus = LabeledCorpus::from_judgments(&ctx.inputs.judgments, topics.as_ref())?;
    let seed = derive_seed(ctx.cfg.seed, &["text"]);
    out.line("\n## Impression text\n");
    let d = corpus.descriptives();
    let mut t = Table::new(&["n_docs", "empty_removed", "total_words", "mean_words", "median_words", "vocabulary"]);
    t.push(vec![
        d.n_docs.to_string(),
        d.empty_removed.to_string(),
        d.total_words.to_string(),
        num(d.mean_words),
        num(d.median_words),
        d.vocabulary.to_string(),
    ]);
    out.table("text_descriptives.csv", &t)?;
    out.line(format!(
        "{} non-empty impressions ({} empty removed), vocabulary {}.",
        d.n_docs, d.empty_removed, d.vocabulary
    ));
    if d.n_docs == 0 {
        out.line("No impression text; c-TF-IDF and topic statistics skipped.");
        return Ok(());
    }
    if cfg.ctfidf {
        let ct = ctfidf(&corpus, cfg.top_n, cfg.n_boot, seed)?;
        let mut t = Table::new(&["class", "rank", "term", "weight", "ci_lo", "ci_hi"]);
        for (class, terms) in ct.classes.iter().zip(&ct.terms) {
            for (k, w) in terms.iter().enumerate() {
                t.push(vec![
                    class.clone(),
                    (k + 1).to_string(),
                    w.term.clone(),
                    num(w.weight),
                    num(w.ci.0),
                    num(w.ci.1),
                ]);
            }
        }
        out.table("ctfidf.csv", &t)?;
    }
    if !cfg.assoc {
        return Ok(());
    }
    if topics.is_none() {
        out.line("No topic labels supplied; association statistics skipped.");
        return Ok(());
    }
    let table = corpus.topic_table();
    let mut t = Table::new(&["scope", "chi2", "df", "p", "cramers_v", "v_lo", "v_hi", "n"]);
    let v = cramers_v(&table, cfg.n_boot, seed)?;
    t.push(vec!["all".into(), num(v.chi2), v.df.to_string(), num(v.p), num(v.v), num(v.ci.0), num(v.ci.1), num(v.n)]);
    for topic in &table.rows {
        let one = table.one_vs_rest(topic)?;
        let v = cramers_v(&one, cfg.n_boot, derive_seed(seed, &[topic]))?;
        t.push(vec![
            format!("topic {topic}"),
            num(v.chi2),
            v.df.to_string(),
            num(v.p),
            num(v.v),
            num(v.ci.0),
            num(v.ci.1),
            num(v.n),
        ]);
    }
    out.table("associations.csv", &t)?;
    let mi = mutual_information_from_table(&table, cfg.n_boot, seed);
    let mut t = Table::new(&["nats", "bits", "ci_lo_nats", "ci_hi_nats"]);
    t.push(vec![num(mi.nats), num(mi.bits), num(mi.ci_nats.0), num(mi.ci_nats.1)]);
    out.table("mutual_information.csv", &t)?;
    let mut t = Table::new(&["topic", "odds_ratio", "ci_lo", "ci_hi", "haldane"]);
    for topic in &table.rows {
        let or = topic_error_odds(&table, topic)?;
        t.push(vec![topic.clone(), num(or.or), num(or.ci.0), num(or.ci.1), or.haldane.to_string()]);
    }
    out.table("topic_error_odds.csv", &t)?;
    let fit = fit_multinomial(&table, cfg.encoding, cfg.n_boot, seed)?;
    let mut t = Table::new(&["topic", "outcome", "probability", "ci_lo", "ci_hi"]);
    for (i, topic) in fit.topics.iter().enumerate() {
        for (k, class) in fit.classes.iter().enumerate() {
            let ci = fit.ci.get(i).and_then(|r| r.get(k)).copied().unwrap_or((f64::NAN, f64::NAN));
            t.push(vec![topic.clone(), class.clone(), num(fit.probs[i][k]), num(ci.0), num(ci.1)]);
        }
    }
    out.table("multinomial.csv", &t)?;
    out.line(format!("Topic × outcome: χ² = {:.2}, V = {:.3}; MI = {:.4} nats.", v.chi2, v.v, mi.nats));
    Ok(())
}
