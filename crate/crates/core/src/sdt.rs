//! Signal detection analysis of identity judgments ("AI" is the signal
//! response), plus descriptive group comparisons.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor, StudentsT};

use crate::error::{Error, Result};
use crate::model::{IdentityJudgment, JudgmentRecord, Truth};
use crate::numeric::{bisect, mean, noncentral_t_cdf, normal_cdf, percentile_interval, probit, stream_rng, variance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorMode {
    /// Rates over all targets of a class, Not-sure responses included.
    #[default]
    IncludeNotSure,
    /// Rates over AI/Human responses only.
    ExcludeNotSure,
}

impl std::str::FromStr for DenominatorMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "include" | "include_not_sure" => Ok(DenominatorMode::IncludeNotSure),
            "exclude" | "exclude_not_sure" => Ok(DenominatorMode::ExcludeNotSure),
            _ => Err(Error::Config(format!("unknown denominator mode `{s}`"))),
        }
    }
}

/// Confusion counts: truth × response.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SdtCounts {
    pub ai_as_ai: u64,
    pub ai_as_human: u64,
    pub ai_not_sure: u64,
    pub human_as_ai: u64,
    pub human_as_human: u64,
    pub human_not_sure: u64,
}

impl SdtCounts {
    pub fn add(&mut self, truth: Truth, judgment: IdentityJudgment) {
        use IdentityJudgment as J;
        match (truth, judgment) {
            (Truth::AI, J::AI) => self.ai_as_ai += 1,
            (Truth::AI, J::Human) => self.ai_as_human += 1,
            (Truth::AI, J::NotSure) => self.ai_not_sure += 1,
            (Truth::Human, J::AI) => self.human_as_ai += 1,
            (Truth::Human, J::Human) => self.human_as_human += 1,
            (Truth::Human, J::NotSure) => self.human_not_sure += 1,
        }
    }

    pub fn from_judgments(judgments: &[JudgmentRecord]) -> Result<Self> {
        let mut c = SdtCounts::default();
        for j in judgments {
            let truth = j.truth.ok_or_else(|| {
                Error::Data(format!("judgment {}→{} has no truth; join the roster first", j.rater_id, j.target))
            })?;
            c.add(truth, j.judgment);
        }
        Ok(c)
    }

    /// Relabels AI targets as human and vice versa.
    pub fn swap_truth(&self) -> Self {
        SdtCounts {
            ai_as_ai: self.human_as_ai,
            ai_as_human: self.human_as_human,
            ai_not_sure: self.human_not_sure,
            human_as_ai: self.ai_as_ai,
            human_as_human: self.ai_as_human,
            human_not_sure: self.ai_not_sure,
        }
    }

    pub fn n_ai(&self) -> u64 {
        self.ai_as_ai + self.ai_as_human + self.ai_not_sure
    }

    pub fn n_human(&self) -> u64 {
        self.human_as_ai + self.human_as_human + self.human_not_sure
    }

    fn denominators(&self, mode: DenominatorMode) -> (u64, u64) {
        match mode {
            DenominatorMode::IncludeNotSure => (self.n_ai(), self.n_human()),
            DenominatorMode::ExcludeNotSure => {
                (self.ai_as_ai + self.ai_as_human, self.human_as_ai + self.human_as_human)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdtResult {
    pub counts: SdtCounts,
    pub mode: DenominatorMode,
    /// Denominators used for the hit and false-alarm rates.
    pub n_ai: u64,
    pub n_human: u64,
    pub hits: u64,
    pub false_alarms: u64,
    pub h_raw: f64,
    pub f_raw: f64,
    pub h_star: f64,
    pub f_star: f64,
    pub z_h: f64,
    pub z_f: f64,
    pub d_prime: f64,
    pub beta: f64,
    pub hit_ci: (f64, f64),
    pub fa_ci: (f64, f64),
    pub dprime_ci: Option<(f64, f64)>,
}

/// `(k + 0.5) / (n + 1)` when the raw rate is exactly 0 or 1, else `k / n`.
pub fn corrected_rate(k: u64, n: u64) -> f64 {
    if k == 0 || k == n {
        (k as f64 + 0.5) / (n as f64 + 1.0)
    } else {
        k as f64 / n as f64
    }
}

pub fn dprime_beta(h_star: f64, f_star: f64) -> (f64, f64) {
    let z_h = probit(h_star);
    let d = z_h - probit(f_star);
    (d, (-z_h * d + 0.5 * d * d).exp())
}

pub fn sdt_from_counts(counts: &SdtCounts, mode: DenominatorMode) -> Result<SdtResult> {
    let (n_ai, n_human) = counts.denominators(mode);
    if n_ai == 0 || n_human == 0 {
        return Err(Error::UndefinedSdt(format!(
            "stratum needs both AI and human targets (AI n={n_ai}, human n={n_human})"
        )));
    }
    let hits = counts.ai_as_ai;
    let fas = counts.human_as_ai;
    let h_star = corrected_rate(hits, n_ai);
    let f_star = corrected_rate(fas, n_human);
    let z_h = probit(h_star);
    let z_f = probit(f_star);
    let d_prime = z_h - z_f;
    Ok(SdtResult {
        counts: *counts,
        mode,
        n_ai,
        n_human,
        hits,
        false_alarms: fas,
        h_raw: hits as f64 / n_ai as f64,
        f_raw: fas as f64 / n_human as f64,
        h_star,
        f_star,
        z_h,
        z_f,
        d_prime,
        beta: (-z_h * d_prime + 0.5 * d_prime * d_prime).exp(),
        hit_ci: wilson_interval(hits, n_ai, 0.95)?,
        fa_ci: wilson_interval(fas, n_human, 0.95)?,
        dprime_ci: None,
    })
}

pub fn sdt(judgments: &[JudgmentRecord], mode: DenominatorMode) -> Result<SdtResult> {
    sdt_from_counts(&SdtCounts::from_judgments(judgments)?, mode)
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64, level: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Numeric("Wilson interval needs n >= 1".into()));
    }
    if k > n {
        return Err(Error::Numeric(format!("{k} successes exceed n = {n}")));
    }
    let z = probit(0.5 + level / 2.0);
    let n = n as f64;
    let p = k as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / denom;
    // The bounds are exactly 0 / 1 at the extremes; avoid rounding residue.
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if p == 1.0 { 1.0 } else { (centre + half).min(1.0) };
    Ok((lo, hi))
}

/// Percentile bootstrap for d′: AI-target rows and human-target rows are
/// resampled separately, each at its own size.
pub fn bootstrap_dprime_ci(counts: &SdtCounts, mode: DenominatorMode, iters: usize, seed: u64) -> Result<(f64, f64)> {
    sdt_from_counts(counts, mode)?;
    let ai_cells = [counts.ai_as_ai, counts.ai_as_human, counts.ai_not_sure];
    let hu_cells = [counts.human_as_ai, counts.human_as_human, counts.human_not_sure];
    let draws: Vec<f64> = (0..iters)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let a = resample_cells(&ai_cells, &mut rng);
            let h = resample_cells(&hu_cells, &mut rng);
            let c = SdtCounts {
                ai_as_ai: a[0],
                ai_as_human: a[1],
                ai_not_sure: a[2],
                human_as_ai: h[0],
                human_as_human: h[1],
                human_not_sure: h[2],
            };
            sdt_from_counts(&c, mode).map(|r| r.d_prime).unwrap_or(f64::NAN)
        })
        .collect();
    let (lo, hi) = percentile_interval(&draws, 0.95);
    if lo.is_nan() {
        return Err(Error::UndefinedSdt("every bootstrap replicate was degenerate".into()));
    }
    Ok((lo, hi))
}

/// Draws `sum(cells)` rows with replacement from rows labelled by cell.
fn resample_cells(cells: &[u64; 3], rng: &mut impl Rng) -> [u64; 3] {
    let n: u64 = cells.iter().sum();
    let mut out = [0u64; 3];
    for _ in 0..n {
        let u = rng.random_range(0..n);
        let k = if u < cells[0] {
            0
        } else if u < cells[0] + cells[1] {
            1
        } else {
            2
        };
        out[k] += 1;
    }
    out
}

pub fn sdt_with_bootstrap(
    judgments: &[JudgmentRecord],
    mode: DenominatorMode,
    iters: usize,
    seed: u64,
) -> Result<SdtResult> {
    let mut r = sdt(judgments, mode)?;
    r.dprime_ci = Some(bootstrap_dprime_ci(&r.counts, mode, iters, seed)?);
    Ok(r)
}

/// Groups judgments by a key and runs SDT per stratum; strata where SDT is
/// undefined are returned as errors alongside the others.
pub fn stratified<K: Ord + Clone>(
    judgments: &[JudgmentRecord],
    key: impl Fn(&JudgmentRecord) -> K,
    mode: DenominatorMode,
) -> Result<BTreeMap<K, Result<SdtResult>>> {
    let mut strata: BTreeMap<K, SdtCounts> = BTreeMap::new();
    for j in judgments {
        let truth = j.truth.ok_or_else(|| Error::Data("judgment without truth".into()))?;
        strata.entry(key(j)).or_default().add(truth, j.judgment);
    }
    Ok(strata.into_iter().map(|(k, c)| (k, sdt_from_counts(&c, mode))).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticipantSummary {
    pub per_rater: Vec<(String, SdtResult)>,
    pub skipped: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci: (f64, f64),
}

/// Per-rater d′ and a t-based interval for their mean. Raters without both
/// target classes are skipped and counted.
pub fn participant_dprimes(judgments: &[JudgmentRecord], mode: DenominatorMode) -> Result<ParticipantSummary> {
    let per = stratified(judgments, |j| j.rater_id.clone(), mode)?;
    let mut per_rater = Vec::new();
    let mut skipped = 0;
    for (rater, r) in per {
        match r {
            Ok(r) => per_rater.push((rater, r)),
            Err(_) => skipped += 1,
        }
    }
    let ds: Vec<f64> = per_rater.iter().map(|(_, r)| r.d_prime).collect();
    if ds.is_empty() {
        return Err(Error::UndefinedSdt("no rater judged both AI and human targets".into()));
    }
    let m = mean(&ds);
    let (sd, ci) = if ds.len() > 1 {
        let sd = variance(&ds, 1).sqrt();
        let t = t_quantile(0.975, (ds.len() - 1) as f64)?;
        let half = t * sd / (ds.len() as f64).sqrt();
        (sd, (m - half, m + half))
    } else {
        (f64::NAN, (f64::NAN, f64::NAN))
    };
    Ok(ParticipantSummary { per_rater, skipped, mean: m, sd, ci })
}

fn t_quantile(p: f64, df: f64) -> Result<f64> {
    StudentsT::new(0.0, 1.0, df).map(|d| d.inverse_cdf(p)).map_err(|e| Error::Numeric(e.to_string()))
}

fn t_sf2(t: f64, df: f64) -> Result<f64> {
    let d = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Numeric(e.to_string()))?;
    Ok(2.0 * d.cdf(-t.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum Comparison {
    WelchT { t: f64, df: f64 },
    Anova { f: f64, df_between: f64, df_within: f64, eta_squared: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupComparison {
    pub labels: Vec<String>,
    pub n: Vec<usize>,
    pub means: Vec<f64>,
    pub test: Comparison,
    pub p: f64,
    /// Pooled-SD Cohen's d (first minus second) with a noncentral-t 95% CI.
    pub cohens_d: Option<(f64, f64, f64)>,
}

/// Welch t (two groups) or one-way ANOVA (more), with Cohen's d for two.
pub fn group_compare(groups: &[(String, Vec<f64>)]) -> Result<GroupComparison> {
    if groups.len() < 2 || groups.iter().any(|(_, v)| v.len() < 2) {
        return Err(Error::Numeric("group comparison needs >= 2 groups of >= 2 observations".into()));
    }
    let labels = groups.iter().map(|(l, _)| l.clone()).collect();
    let n: Vec<usize> = groups.iter().map(|(_, v)| v.len()).collect();
    let means: Vec<f64> = groups.iter().map(|(_, v)| mean(v)).collect();
    let vars: Vec<f64> = groups.iter().map(|(_, v)| variance(v, 1)).collect();
    if groups.len() == 2 {
        let (n1, n2) = (n[0] as f64, n[1] as f64);
        let se2 = vars[0] / n1 + vars[1] / n2;
        if se2 <= 0.0 {
            return Err(Error::Numeric("both groups have zero variance".into()));
        }
        let t = (means[0] - means[1]) / se2.sqrt();
        let df = se2 * se2 / ((vars[0] / n1).powi(2) / (n1 - 1.0) + (vars[1] / n2).powi(2) / (n2 - 1.0));
        let p = t_sf2(t, df)?;
        let sp = (((n1 - 1.0) * vars[0] + (n2 - 1.0) * vars[1]) / (n1 + n2 - 2.0)).sqrt();
        let d = (means[0] - means[1]) / sp;
        let (lo, hi) = cohens_d_ci(d, n[0], n[1], 0.95);
        Ok(GroupComparison { labels, n, means, test: Comparison::WelchT { t, df }, p, cohens_d: Some((d, lo, hi)) })
    } else {
        let all: Vec<f64> = groups.iter().flat_map(|(_, v)| v.iter().copied()).collect();
        let grand = mean(&all);
        let ss_between: f64 = means.iter().zip(&n).map(|(m, &k)| k as f64 * (m - grand).powi(2)).sum();
        let ss_within: f64 = vars.iter().zip(&n).map(|(v, &k)| v * (k as f64 - 1.0)).sum();
        let df_between = (groups.len() - 1) as f64;
        let df_within = (all.len() - groups.len()) as f64;
        if ss_within <= 0.0 {
            return Err(Error::Numeric("zero within-group variance".into()));
        }
        let f = (ss_between / df_between) / (ss_within / df_within);
        let p = FisherSnedecor::new(df_between, df_within)
            .map(|d| 1.0 - d.cdf(f))
            .map_err(|e| Error::Numeric(e.to_string()))?;
        let eta_squared = ss_between / (ss_between + ss_within);
        Ok(GroupComparison {
            labels,
            n,
            means,
            test: Comparison::Anova { f, df_between, df_within, eta_squared },
            p,
            cohens_d: None,
        })
    }
}

/// Interval for Cohen's d by inverting the noncentral t CDF.
pub fn cohens_d_ci(d: f64, n1: usize, n2: usize, level: f64) -> (f64, f64) {
    let k = ((n1 * n2) as f64 / (n1 + n2) as f64).sqrt();
    let df = (n1 + n2 - 2) as f64;
    let t = d * k;
    let a = (1.0 - level) / 2.0;
    let span = 10.0 + t.abs();
    let lo = bisect(|nc| noncentral_t_cdf(t, df, nc) - (1.0 - a), t - span, t + span, 1e-10);
    let hi = bisect(|nc| noncentral_t_cdf(t, df, nc) - a, t - span, t + span, 1e-10);
    (lo / k, hi / k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub n: usize,
    pub ci: (f64, f64),
}

/// Pearson r with a Fisher-z 95% interval.
pub fn pearson_fisher(x: &[f64], y: &[f64]) -> Result<Correlation> {
    if x.len() != y.len() || x.len() < 4 {
        return Err(Error::Numeric("pearson_fisher needs paired samples with n >= 4".into()));
    }
    let r = crate::numeric::pearson(x, y)
        .ok_or_else(|| Error::Numeric("correlation undefined for constant input".into()))?;
    Ok(Correlation { r, n: x.len(), ci: fisher_ci(r, x.len(), 0.95) })
}

pub fn fisher_ci(r: f64, n: usize, level: f64) -> (f64, f64) {
    if r.abs() >= 1.0 {
        return (r, r);
    }
    let z = r.atanh();
    let se = 1.0 / ((n as f64) - 3.0).sqrt();
    let q = probit(0.5 + level / 2.0);
    ((z - q * se).tanh(), (z + q * se).tanh())
}

/// Standard normal upper-tail helper used in reports.
pub fn two_sided_normal_p(z: f64) -> f64 {
    2.0 * normal_cdf(-z.abs())
}
