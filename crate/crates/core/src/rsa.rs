//! Representational similarity analysis over evaluated targets: target
//! summaries, five dissimilarity spaces, Spearman alignment with bootstrap
//! and label-permutation inference, and classical MDS.

use std::collections::{BTreeMap, HashMap};
use std::str::FromStr;

use log::warn;
use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cues::{CueProfile, Feature};
use crate::error::{Error, Result};
use crate::model::{Composition, Condition, GroupRecord, IdentityJudgment, JudgmentRecord, Truth};
use crate::numeric::{average_ranks, derive_seed, mean, pearson, percentile_interval, spearman, stream_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSummary {
    pub group_id: String,
    pub target: String,
    pub condition: Condition,
    pub truth: Truth,
    pub modal_judgment: IdentityJudgment,
    pub cues: Vec<f64>,
    /// Mean humanness and trust ratings.
    pub impressions: [f64; 2],
    pub topic: Option<String>,
    pub n_ratings: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationReport {
    pub targets_rated: usize,
    pub kept: usize,
    pub missing_cues: usize,
    pub missing_profile: usize,
}

/// Most frequent judgment; any tie for first place resolves to Not sure.
pub fn modal_judgment(js: &[IdentityJudgment]) -> IdentityJudgment {
    let mut counts: BTreeMap<IdentityJudgment, usize> = BTreeMap::new();
    for &j in js {
        *counts.entry(j).or_default() += 1;
    }
    let top = counts.values().copied().max().unwrap_or(0);
    let leaders: Vec<IdentityJudgment> = counts.iter().filter(|(_, &c)| c == top).map(|(&j, _)| j).collect();
    if leaders.len() == 1 {
        leaders[0]
    } else {
        IdentityJudgment::NotSure
    }
}

/// Most frequent label; ties resolve to the lexicographically first.
fn modal_label(labels: &[&str]) -> Option<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for l in labels {
        *counts.entry(l).or_default() += 1;
    }
    let top = *counts.values().max()?;
    counts.into_iter().find(|(_, c)| *c == top).map(|(l, _)| l.to_string())
}

pub type TopicKey = (String, String, String);

/// Aggregates judgments (truth joined) to targets. `topics` maps
/// (rater, group, target) to the impression's topic label.
pub fn aggregate_targets(
    judgments: &[JudgmentRecord],
    groups: &[GroupRecord],
    profiles: &[CueProfile],
    features: &[Feature],
    topics: Option<&HashMap<TopicKey, String>>,
) -> Result<(Vec<TargetSummary>, AggregationReport)> {
    let prof: HashMap<(&str, &str), &CueProfile> =
        profiles.iter().map(|p| ((p.group_id.as_str(), p.target.as_str()), p)).collect();
    let conds: HashMap<&str, Condition> = groups.iter().map(|g| (g.group_id.as_str(), g.condition)).collect();
    let mut by_target: BTreeMap<(&str, &str), Vec<&JudgmentRecord>> = BTreeMap::new();
    for j in judgments {
        by_target.entry((j.group_id.as_str(), j.target.as_str())).or_default().push(j);
    }
    let mut report = AggregationReport { targets_rated: by_target.len(), ..Default::default() };
    let mut out = Vec::new();
    for ((g, t), js) in by_target {
        let Some(p) = prof.get(&(g, t)) else {
            report.missing_profile += 1;
            continue;
        };
        let cues: Option<Vec<f64>> = features.iter().map(|&f| p.get(f)).collect();
        let Some(cues) = cues else {
            report.missing_cues += 1;
            continue;
        };
        let truth = js[0].truth.or(p.truth).ok_or_else(|| Error::Data(format!("target {g}/{t} has no truth")))?;
        let condition = *conds.get(g).ok_or_else(|| Error::Data(format!("unknown group {g}")))?;
        let topic = topics.and_then(|m| {
            let labels: Vec<&str> = js
                .iter()
                .filter_map(|j| m.get(&(j.rater_id.clone(), j.group_id.clone(), j.target.clone())).map(String::as_str))
                .collect();
            modal_label(&labels)
        });
        let n = js.len() as f64;
        out.push(TargetSummary {
            group_id: g.to_string(),
            target: t.to_string(),
            condition,
            truth,
            modal_judgment: modal_judgment(&js.iter().map(|j| j.judgment).collect::<Vec<_>>()),
            cues,
            impressions: [
                js.iter().map(|j| j.ratings.humanness as f64).sum::<f64>() / n,
                js.iter().map(|j| j.ratings.trust as f64).sum::<f64>() / n,
            ],
            topic,
            n_ratings: js.len(),
        });
    }
    report.kept = out.len();
    Ok((out, report))
}

pub fn h2_only(summaries: &[TargetSummary]) -> Vec<TargetSummary> {
    summaries.iter().filter(|s| s.condition.composition == Composition::H2Ai1).cloned().collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Cue,
    Judgment,
    Truth,
    Impression,
    Topic,
}

impl Space {
    pub const ALL: [Space; 5] = [Space::Cue, Space::Judgment, Space::Truth, Space::Impression, Space::Topic];

    pub fn name(self) -> &'static str {
        match self {
            Space::Cue => "cue",
            Space::Judgment => "judgment",
            Space::Truth => "truth",
            Space::Impression => "impression",
            Space::Topic => "topic",
        }
    }
}

impl FromStr for Space {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Space::ALL.into_iter().find(|x| x.name() == s).ok_or_else(|| Error::Config(format!("unknown RSA space `{s}`")))
    }
}

/// Symmetric dissimilarity matrix with zero diagonal, stored as its
/// condensed upper triangle (row-major, i < j).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rdm {
    pub n: usize,
    pub space: Space,
    pub condensed: Vec<f64>,
    pub d_mid: f64,
}

pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

impl Rdm {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.condensed[pair_index(self.n, i, j)]
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Relabels targets: entry (i, j) of the result is entry (π_i, π_j).
    pub fn permuted(&self, perm: &[usize]) -> Rdm {
        let n = self.n;
        let mut c = Vec::with_capacity(self.condensed.len());
        for i in 0..n {
            for j in i + 1..n {
                c.push(self.get(perm[i], perm[j]));
            }
        }
        Rdm { condensed: c, ..self.clone() }
    }

    /// Checks the range constraints of the space.
    pub fn check(&self) -> Result<()> {
        if self.condensed.len() != self.n * self.n.saturating_sub(1) / 2 {
            return Err(Error::Numeric("condensed length does not match n".into()));
        }
        for &v in &self.condensed {
            let ok = match self.space {
                Space::Cue | Space::Impression => (-1e-12..=2.0 + 1e-12).contains(&v),
                Space::Truth | Space::Topic => v == 0.0 || v == 1.0,
                Space::Judgment => v == 0.0 || v == 1.0 || v == self.d_mid,
            };
            if !ok || !v.is_finite() {
                return Err(Error::Numeric(format!("{} RDM entry {v} out of range", self.space.name())));
            }
        }
        Ok(())
    }
}

fn zscore_columns(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = rows.first().map(|r| r.len()).unwrap_or(0);
    let n = rows.len() as f64;
    let mut out = rows.to_vec();
    for c in 0..k {
        let m = rows.iter().map(|r| r[c]).sum::<f64>() / n;
        let sd = (rows.iter().map(|r| (r[c] - m).powi(2)).sum::<f64>() / n).sqrt();
        for r in out.iter_mut() {
            r[c] = if sd > 0.0 { (r[c] - m) / sd } else { 0.0 };
        }
    }
    out
}

fn cosine_rdm(vectors: &[Vec<f64>], space: Space) -> Rdm {
    let n = vectors.len();
    let norms: Vec<f64> = vectors.iter().map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    let zero = norms.iter().filter(|&&x| x == 0.0).count();
    if zero > 0 {
        warn!("{zero} zero-norm vectors in {} space; their distances are set to 1", space.name());
    }
    let condensed: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let (vectors, norms) = (&vectors, &norms);
            (i + 1..n).map(move |j| {
                if norms[i] == 0.0 || norms[j] == 0.0 {
                    1.0
                } else {
                    let dot: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
                    (1.0 - dot / (norms[i] * norms[j])).clamp(0.0, 2.0)
                }
            })
        })
        .collect();
    Rdm { n, space, condensed, d_mid: 0.5 }
}

fn label_rdm<T: PartialEq>(labels: &[T], space: Space) -> Rdm {
    let n = labels.len();
    let mut condensed = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            condensed.push(if labels[i] == labels[j] { 0.0 } else { 1.0 });
        }
    }
    Rdm { n, space, condensed, d_mid: 0.5 }
}

pub fn judgment_distance(a: IdentityJudgment, b: IdentityJudgment, d_mid: f64) -> f64 {
    use IdentityJudgment::*;
    match (a, b) {
        _ if a == b => 0.0,
        (NotSure, _) | (_, NotSure) => d_mid,
        _ => 1.0,
    }
}

pub fn build_rdm(space: Space, summaries: &[TargetSummary], d_mid: f64) -> Result<Rdm> {
    let mut rdm = match space {
        Space::Cue => cosine_rdm(&zscore_columns(&summaries.iter().map(|s| s.cues.clone()).collect::<Vec<_>>()), space),
        Space::Impression => {
            cosine_rdm(&zscore_columns(&summaries.iter().map(|s| s.impressions.to_vec()).collect::<Vec<_>>()), space)
        }
        Space::Truth => label_rdm(&summaries.iter().map(|s| s.truth).collect::<Vec<_>>(), space),
        Space::Topic => {
            let labels: Option<Vec<&String>> = summaries.iter().map(|s| s.topic.as_ref()).collect();
            let labels = labels.ok_or_else(|| Error::Data("topic RDM needs a topic label for every target".into()))?;
            label_rdm(&labels, space)
        }
        Space::Judgment => {
            let n = summaries.len();
            let mut condensed = Vec::with_capacity(n * n.saturating_sub(1) / 2);
            for i in 0..n {
                for j in i + 1..n {
                    condensed.push(judgment_distance(summaries[i].modal_judgment, summaries[j].modal_judgment, d_mid));
                }
            }
            Rdm { n, space, condensed, d_mid }
        }
    };
    rdm.d_mid = d_mid;
    Ok(rdm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsaResult {
    pub a: Space,
    pub b: Space,
    pub rho: f64,
    pub boot_ci: (f64, f64),
    pub p_perm: f64,
    pub n_targets: usize,
    pub n_boot: usize,
    pub n_perm: usize,
}

/// Spearman correlation of two RDMs' condensed vectors, a bootstrap over
/// pairs, and a one-sided permutation test relabelling targets of `b`.
pub fn rsa_correlation(a: &Rdm, b: &Rdm, n_boot: usize, n_perm: usize, seed: u64) -> Result<RsaResult> {
    if a.n != b.n {
        return Err(Error::Data(format!("RDMs cover different target sets ({} vs {})", a.n, b.n)));
    }
    let rho = spearman(&a.condensed, &b.condensed)
        .ok_or_else(|| Error::Numeric("correlation undefined: an RDM is constant".into()))?;
    let m = a.condensed.len();
    let boot_seed = derive_seed(seed, &["rsa-boot", a.space.name(), b.space.name()]);
    let boots: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(boot_seed, i as u64);
            let mut xa = Vec::with_capacity(m);
            let mut xb = Vec::with_capacity(m);
            for _ in 0..m {
                let k = rng.random_range(0..m);
                xa.push(a.condensed[k]);
                xb.push(b.condensed[k]);
            }
            spearman(&xa, &xb).unwrap_or(f64::NAN)
        })
        .collect();
    let boot_ci = percentile_interval(&boots, 0.95);

    // Relabelling targets only moves values between pairs, so ranks of the
    // permuted vector are the original ranks re-indexed.
    let ra = average_ranks(&a.condensed);
    let rb = Rdm { condensed: average_ranks(&b.condensed), ..b.clone() };
    let perm_seed = derive_seed(seed, &["rsa-perm", a.space.name(), b.space.name()]);
    let null: Vec<f64> = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(perm_seed, i as u64);
            let mut perm: Vec<usize> = (0..b.n).collect();
            perm.shuffle(&mut rng);
            pearson(&ra, &rb.permuted(&perm).condensed).unwrap_or(f64::NAN)
        })
        .collect();
    let exceed = null.iter().filter(|&&v| v >= rho - 1e-12).count();
    Ok(RsaResult {
        a: a.space,
        b: b.space,
        rho,
        boot_ci,
        p_perm: (1 + exceed) as f64 / (1 + n_perm) as f64,
        n_targets: a.n,
        n_boot,
        n_perm,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coords: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    /// Kruskal stress-1 of embedded versus input distances.
    pub stress: f64,
}

/// Classical (Torgerson) MDS. Each axis is signed so that its largest
/// absolute coordinate is positive.
pub fn mds_embed(rdm: &Rdm, dims: usize) -> Result<Embedding> {
    let n = rdm.n;
    if n < 2 {
        return Err(Error::Data("MDS needs at least two targets".into()));
    }
    let d2 = DMatrix::from_fn(n, n, |i, j| rdm.get(i, j).powi(2));
    let row_means: Vec<f64> = (0..n).map(|i| d2.row(i).mean()).collect();
    let grand = mean(&row_means);
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (d2[(i, j)] - row_means[i] - row_means[j] + grand));
    let eig = b.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]));
    let pos: f64 = eig.eigenvalues.iter().filter(|&&v| v > 0.0).sum();
    let neg: f64 = -eig.eigenvalues.iter().filter(|&&v| v < 0.0).sum::<f64>();
    if neg > pos {
        warn!("negative eigenvalues dominate ({neg:.3} vs {pos:.3}); embedding uses the positive part");
    }
    let mut coords = vec![vec![0.0; dims]; n];
    let mut eigenvalues = Vec::with_capacity(dims);
    for (d, &k) in order.iter().take(dims).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        eigenvalues.push(eig.eigenvalues[k]);
        let v = eig.eigenvectors.column(k);
        let anchor = (0..n).max_by(|&x, &y| v[x].abs().total_cmp(&v[y].abs()).then(y.cmp(&x))).unwrap();
        let sign = if v[anchor] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i][d] = sign * v[i] * lambda.sqrt();
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let e: f64 = coords[i].iter().zip(&coords[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            num += (rdm.get(i, j) - e).powi(2);
            den += rdm.get(i, j).powi(2);
        }
    }
    Ok(Embedding { coords, eigenvalues, stress: if den > 0.0 { (num / den).sqrt() } else { 0.0 } })
}
