//! Impression-text statistics: corpus descriptives, class-based TF-IDF with
//! bootstrap intervals, and association measures between topic labels and
//! judgment outcomes.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{IdentityJudgment, JudgmentRecord, Truth};
use crate::numeric::{derive_seed, median, percentile_interval, stream_rng};
use crate::rsa::TopicKey;

/// Tokenizer settings recorded in output metadata.
pub const TOKENIZER: &str = "lowercase; split on non-alphabetic characters; keep tokens of length >= 2; no stemming";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Outcome {
    #[serde(rename = "AI_AI")]
    AiAi,
    #[serde(rename = "AI_Human")]
    AiHuman,
    #[serde(rename = "Human_AI")]
    HumanAi,
    #[serde(rename = "Human_Human")]
    HumanHuman,
    #[serde(rename = "Not_sure")]
    NotSure,
}

impl Outcome {
    pub const ALL: [Outcome; 5] =
        [Outcome::AiAi, Outcome::AiHuman, Outcome::HumanAi, Outcome::HumanHuman, Outcome::NotSure];

    /// Truth first, judgment second; Not sure collapses regardless of truth.
    pub fn new(truth: Truth, judgment: IdentityJudgment) -> Self {
        match (truth, judgment) {
            (_, IdentityJudgment::NotSure) => Outcome::NotSure,
            (Truth::AI, IdentityJudgment::AI) => Outcome::AiAi,
            (Truth::AI, IdentityJudgment::Human) => Outcome::AiHuman,
            (Truth::Human, IdentityJudgment::AI) => Outcome::HumanAi,
            (Truth::Human, IdentityJudgment::Human) => Outcome::HumanHuman,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Outcome::AiAi => "AI_AI",
            Outcome::AiHuman => "AI_Human",
            Outcome::HumanAi => "Human_AI",
            Outcome::HumanHuman => "Human_Human",
            Outcome::NotSure => "Not_sure",
        }
    }

    pub fn index(self) -> usize {
        Outcome::ALL.iter().position(|&o| o == self).unwrap()
    }

    pub fn is_correct(self) -> Option<bool> {
        match self {
            Outcome::AiAi | Outcome::HumanHuman => Some(true),
            Outcome::AiHuman | Outcome::HumanAi => Some(false),
            Outcome::NotSure => None,
        }
    }
}

impl FromStr for Outcome {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Outcome::ALL.into_iter().find(|o| o.label() == s).ok_or_else(|| Error::Data(format!("unknown outcome `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub text: String,
    pub outcome: Outcome,
    pub topic: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub docs: Vec<Document>,
    pub empty_removed: usize,
}

impl LabeledCorpus {
    /// Filters empty texts and counts them.
    pub fn new(docs: Vec<Document>) -> Self {
        let before = docs.len();
        let docs: Vec<Document> = docs.into_iter().filter(|d| !d.text.trim().is_empty()).collect();
        LabeledCorpus { empty_removed: before - docs.len(), docs }
    }

    pub fn from_judgments(judgments: &[JudgmentRecord], topics: Option<&HashMap<TopicKey, String>>) -> Result<Self> {
        let docs = judgments
            .iter()
            .map(|j| {
                let truth = j.truth.ok_or_else(|| {
                    Error::Data(format!("judgment {}/{}/{} lacks truth", j.rater_id, j.group_id, j.target))
                })?;
                Ok(Document {
                    text: j.impression_text.clone(),
                    outcome: Outcome::new(truth, j.judgment),
                    topic: topics
                        .and_then(|m| m.get(&(j.rater_id.clone(), j.group_id.clone(), j.target.clone())).cloned()),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabeledCorpus::new(docs))
    }

    /// Topic labels present, in numeric order when all labels are integers.
    pub fn topics(&self) -> Vec<String> {
        let set: BTreeSet<&String> = self.docs.iter().filter_map(|d| d.topic.as_ref()).collect();
        let mut v: Vec<String> = set.into_iter().cloned().collect();
        sort_labels(&mut v);
        v
    }

    /// Topic × outcome counts over labelled documents.
    pub fn topic_table(&self) -> ContingencyTable {
        let topics = self.topics();
        let mut counts = vec![vec![0.0; 5]; topics.len()];
        for d in &self.docs {
            if let Some(t) = &d.topic {
                let r = topics.iter().position(|x| x == t).unwrap();
                counts[r][d.outcome.index()] += 1.0;
            }
        }
        ContingencyTable { rows: topics, cols: Outcome::ALL.iter().map(|o| o.label().to_string()).collect(), counts }
    }

    pub fn descriptives(&self) -> CorpusStats {
        let lens: Vec<f64> = self.docs.iter().map(|d| d.text.split_whitespace().count() as f64).collect();
        let vocab: BTreeSet<String> = self.docs.iter().flat_map(|d| tokenize(&d.text)).collect();
        let mut per_outcome = BTreeMap::new();
        for d in &self.docs {
            *per_outcome.entry(d.outcome.label().to_string()).or_insert(0usize) += 1;
        }
        CorpusStats {
            n_docs: self.docs.len(),
            empty_removed: self.empty_removed,
            total_words: lens.iter().sum::<f64>() as usize,
            mean_words: if lens.is_empty() { 0.0 } else { lens.iter().sum::<f64>() / lens.len() as f64 },
            median_words: if lens.is_empty() { 0.0 } else { median(&lens) },
            vocabulary: vocab.len(),
            per_outcome,
        }
    }
}

fn sort_labels(v: &mut [String]) {
    if v.iter().all(|s| s.parse::<i64>().is_ok()) {
        v.sort_by_key(|s| s.parse::<i64>().unwrap());
    } else {
        v.sort();
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_docs: usize,
    pub empty_removed: usize,
    pub total_words: usize,
    pub mean_words: f64,
    pub median_words: f64,
    pub vocabulary: usize,
    pub per_outcome: BTreeMap<String, usize>,
}

/// Reads `rater_id,group_id,target,topic` rows.
pub fn read_topics(path: &Path) -> Result<HashMap<TopicKey, String>> {
    #[derive(Deserialize)]
    struct Row {
        rater_id: String,
        group_id: String,
        target: String,
        topic: String,
    }
    let mut out = HashMap::new();
    for row in csv::Reader::from_path(path)?.deserialize() {
        let r: Row = row?;
        out.insert((r.rater_id, r.group_id, r.target), r.topic);
    }
    Ok(out)
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphabetic())
        .filter(|t| t.chars().count() >= 2)
        .map(str::to_string)
        .collect()
}

// ---------------------------------------------------------------- c-TF-IDF

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermWeight {
    pub term: String,
    pub weight: f64,
    pub ci: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CtfidfResult {
    pub classes: Vec<String>,
    pub terms: Vec<Vec<TermWeight>>,
    pub excluded: Vec<String>,
    pub tokenizer: String,
    pub n_boot: usize,
}

type ClassCounts = Vec<BTreeMap<String, f64>>;

fn class_counts(classes: &[Vec<Vec<String>>]) -> ClassCounts {
    classes
        .iter()
        .map(|docs| {
            let mut m = BTreeMap::new();
            for d in docs {
                for t in d {
                    *m.entry(t.clone()).or_insert(0.0) += 1.0;
                }
            }
            m
        })
        .collect()
}

/// Weight of term t in class c: (count_tc / tokens_c) · ln(1 + A / f_t),
/// with A the mean token count per class and f_t the term's total count.
pub fn ctfidf_weights(counts: &ClassCounts) -> Vec<BTreeMap<String, f64>> {
    let totals: Vec<f64> = counts.iter().map(|m| m.values().sum()).collect();
    let avg = totals.iter().sum::<f64>() / totals.len() as f64;
    let mut freq: BTreeMap<&str, f64> = BTreeMap::new();
    for m in counts {
        for (t, c) in m {
            *freq.entry(t).or_insert(0.0) += c;
        }
    }
    counts
        .iter()
        .zip(&totals)
        .map(|(m, &tot)| m.iter().map(|(t, &c)| (t.clone(), c / tot * (1.0 + avg / freq[t.as_str()]).ln())).collect())
        .collect()
}

/// Ranks terms per class and bootstraps the top `top_n` weights by
/// resampling documents within each class.
pub fn ctfidf(corpus: &LabeledCorpus, top_n: usize, n_boot: usize, seed: u64) -> Result<CtfidfResult> {
    let mut by_class: BTreeMap<Outcome, Vec<Vec<String>>> = BTreeMap::new();
    for d in &corpus.docs {
        by_class.entry(d.outcome).or_default().push(tokenize(&d.text));
    }
    let mut excluded = Vec::new();
    let mut names = Vec::new();
    let mut classes = Vec::new();
    for o in Outcome::ALL {
        match by_class.remove(&o) {
            Some(docs) if docs.iter().any(|d| !d.is_empty()) => {
                names.push(o.label().to_string());
                classes.push(docs);
            }
            _ => {
                warn!("class {} has no tokens; excluded from c-TF-IDF", o.label());
                excluded.push(o.label().to_string());
            }
        }
    }
    if classes.len() < 2 {
        return Err(Error::Data("c-TF-IDF needs at least two non-empty classes".into()));
    }
    let weights = ctfidf_weights(&class_counts(&classes));
    let top: Vec<Vec<(String, f64)>> = weights
        .iter()
        .map(|m| {
            let mut v: Vec<(String, f64)> = m.iter().map(|(t, &w)| (t.clone(), w)).collect();
            v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            v.truncate(top_n);
            v
        })
        .collect();
    let boot_seed = derive_seed(seed, &["ctfidf"]);
    let reps: Vec<Vec<Vec<f64>>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut rng = stream_rng(boot_seed, b as u64);
            let resampled: Vec<Vec<Vec<String>>> = classes
                .iter()
                .map(|docs| (0..docs.len()).map(|_| docs[rng.random_range(0..docs.len())].clone()).collect())
                .collect();
            let w = ctfidf_weights(&class_counts(&resampled));
            top.iter()
                .zip(&w)
                .map(|(terms, m)| terms.iter().map(|(t, _)| m.get(t).copied().unwrap_or(0.0)).collect())
                .collect()
        })
        .collect();
    let terms = top
        .iter()
        .enumerate()
        .map(|(c, ts)| {
            ts.iter()
                .enumerate()
                .map(|(k, (t, w))| {
                    let samples: Vec<f64> = reps.iter().map(|r| r[c][k]).collect();
                    TermWeight { term: t.clone(), weight: *w, ci: percentile_interval(&samples, 0.95) }
                })
                .collect()
        })
        .collect();
    Ok(CtfidfResult { classes: names, terms, excluded, tokenizer: TOKENIZER.into(), n_boot })
}

// ------------------------------------------------------------ associations

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub counts: Vec<Vec<f64>>,
}

impl ContingencyTable {
    pub fn new(counts: Vec<Vec<f64>>) -> Self {
        let rows = (0..counts.len()).map(|i| i.to_string()).collect();
        let cols = (0..counts.first().map_or(0, Vec::len)).map(|j| j.to_string()).collect();
        ContingencyTable { rows, cols, counts }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }

    /// Drops rows and columns whose margin is zero.
    pub fn collapse_empty(&self) -> ContingencyTable {
        let keep_r: Vec<usize> = (0..self.rows.len()).filter(|&i| self.counts[i].iter().sum::<f64>() > 0.0).collect();
        let keep_c: Vec<usize> =
            (0..self.cols.len()).filter(|&j| self.counts.iter().map(|r| r[j]).sum::<f64>() > 0.0).collect();
        if keep_r.len() < self.rows.len() || keep_c.len() < self.cols.len() {
            warn!(
                "collapsed {} empty rows and {} empty columns",
                self.rows.len() - keep_r.len(),
                self.cols.len() - keep_c.len()
            );
        }
        ContingencyTable {
            rows: keep_r.iter().map(|&i| self.rows[i].clone()).collect(),
            cols: keep_c.iter().map(|&j| self.cols[j].clone()).collect(),
            counts: keep_r.iter().map(|&i| keep_c.iter().map(|&j| self.counts[i][j]).collect()).collect(),
        }
    }

    /// Row `label` against all other rows pooled.
    pub fn one_vs_rest(&self, label: &str) -> Result<ContingencyTable> {
        let r = self.rows.iter().position(|x| x == label).ok_or_else(|| Error::Data(format!("no row `{label}`")))?;
        let rest: Vec<f64> = (0..self.cols.len())
            .map(|j| self.counts.iter().enumerate().filter(|(i, _)| *i != r).map(|(_, row)| row[j]).sum())
            .collect();
        Ok(ContingencyTable {
            rows: vec![label.to_string(), "rest".into()],
            cols: self.cols.clone(),
            counts: vec![self.counts[r].clone(), rest],
        })
    }

    /// Resamples `total` observations from the cell proportions.
    fn resample(&self, rng: &mut impl Rng) -> ContingencyTable {
        let cells: Vec<f64> = self.counts.iter().flatten().copied().collect();
        let dist = WeightedIndex::new(&cells).expect("positive total");
        let c = self.cols.len();
        let mut counts = vec![vec![0.0; c]; self.rows.len()];
        for _ in 0..self.total().round() as usize {
            let k = dist.sample(rng);
            counts[k / c][k % c] += 1.0;
        }
        ContingencyTable { counts, ..self.clone() }
    }
}

pub fn chi_square(t: &ContingencyTable) -> (f64, usize) {
    let n = t.total();
    let rs: Vec<f64> = t.counts.iter().map(|r| r.iter().sum()).collect();
    let cs: Vec<f64> = (0..t.cols.len()).map(|j| t.counts.iter().map(|r| r[j]).sum()).collect();
    let mut chi2 = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            let e = rs[i] * cs[j] / n;
            chi2 += (o - e).powi(2) / e;
        }
    }
    (chi2, (t.rows.len() - 1) * (t.cols.len() - 1))
}

fn v_of(t: &ContingencyTable) -> Option<f64> {
    let t = t.collapse_empty();
    let k = t.rows.len().min(t.cols.len());
    if k < 2 {
        return None;
    }
    let (chi2, _) = chi_square(&t);
    Some((chi2 / (t.total() * (k - 1) as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CramersV {
    pub chi2: f64,
    pub df: usize,
    pub p: f64,
    pub v: f64,
    pub ci: (f64, f64),
    pub n: f64,
}

pub fn cramers_v(table: &ContingencyTable, n_boot: usize, seed: u64) -> Result<CramersV> {
    let t = table.collapse_empty();
    if t.rows.len() < 2 || t.cols.len() < 2 || t.total() <= 0.0 {
        return Err(Error::Data("association needs at least a 2x2 table with positive total".into()));
    }
    let (chi2, df) = chi_square(&t);
    let p = ChiSquared::new(df as f64).map(|d| d.sf(chi2)).unwrap_or(f64::NAN);
    let v = v_of(&t).unwrap();
    let bs = derive_seed(seed, &["cramers-v"]);
    let boots: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|b| v_of(&t.resample(&mut stream_rng(bs, b as u64))).unwrap_or(f64::NAN))
        .collect();
    Ok(CramersV { chi2, df, p, v, ci: percentile_interval(&boots, 0.95), n: t.total() })
}

pub fn mutual_information_table(t: &ContingencyTable) -> f64 {
    let n = t.total();
    let rs: Vec<f64> = t.counts.iter().map(|r| r.iter().sum()).collect();
    let cs: Vec<f64> = (0..t.cols.len()).map(|j| t.counts.iter().map(|r| r[j]).sum()).collect();
    let mut mi = 0.0;
    for (i, row) in t.counts.iter().enumerate() {
        for (j, &o) in row.iter().enumerate() {
            if o > 0.0 {
                mi += o / n * (o * n / (rs[i] * cs[j])).ln();
            }
        }
    }
    mi.max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MutualInformation {
    pub nats: f64,
    pub bits: f64,
    pub ci_nats: (f64, f64),
}

pub fn mutual_information_from_table(table: &ContingencyTable, n_boot: usize, seed: u64) -> MutualInformation {
    let nats = mutual_information_table(table);
    let bs = derive_seed(seed, &["mutual-information"]);
    let boots: Vec<f64> = (0..n_boot)
        .into_par_iter()
        .map(|b| mutual_information_table(&table.resample(&mut stream_rng(bs, b as u64))))
        .collect();
    MutualInformation { nats, bits: nats / std::f64::consts::LN_2, ci_nats: percentile_interval(&boots, 0.95) }
}

/// Plug-in mutual information between paired labels.
pub fn mutual_information<A: Ord + Clone, B: Ord + Clone>(
    a: &[A],
    b: &[B],
    n_boot: usize,
    seed: u64,
) -> Result<MutualInformation> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Data("mutual information needs equal-length, non-empty label vectors".into()));
    }
    let ra: Vec<A> = a.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let rb: Vec<B> = b.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let mut counts = vec![vec![0.0; rb.len()]; ra.len()];
    for (x, y) in a.iter().zip(b) {
        counts[ra.binary_search(x).unwrap()][rb.binary_search(y).unwrap()] += 1.0;
    }
    Ok(mutual_information_from_table(&ContingencyTable::new(counts), n_boot, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OddsRatio {
    pub or: f64,
    pub ci: (f64, f64),
    pub haldane: bool,
}

/// Odds ratio of [[a, b], [c, d]] with a log-normal 95% interval and a
/// Haldane 0.5 correction when any cell is zero.
pub fn odds_ratio(table: [[f64; 2]; 2]) -> OddsRatio {
    let haldane = table.iter().flatten().any(|&v| v == 0.0);
    let adj = if haldane { 0.5 } else { 0.0 };
    let [[a, b], [c, d]] = table.map(|r| r.map(|v| v + adj));
    let or = a * d / (b * c);
    let se = (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt();
    OddsRatio { or, ci: ((or.ln() - 1.96 * se).exp(), (or.ln() + 1.96 * se).exp()), haldane }
}

/// Incorrect/correct odds inside `topic` versus outside it; Not sure
/// responses are excluded.
pub fn topic_error_odds(table: &ContingencyTable, topic: &str) -> Result<OddsRatio> {
    let r = table.rows.iter().position(|x| x == topic).ok_or_else(|| Error::Data(format!("no topic `{topic}`")))?;
    let col = |o: Outcome| {
        table.cols.iter().position(|c| c == o.label()).ok_or_else(|| Error::Data(format!("no column {}", o.label())))
    };
    let (aa, ah, ha, hh) =
        (col(Outcome::AiAi)?, col(Outcome::AiHuman)?, col(Outcome::HumanAi)?, col(Outcome::HumanHuman)?);
    let inc = |row: &Vec<f64>| row[ah] + row[ha];
    let cor = |row: &Vec<f64>| row[aa] + row[hh];
    let (inc_all, cor_all): (f64, f64) = (table.counts.iter().map(inc).sum(), table.counts.iter().map(cor).sum());
    let row = &table.counts[r];
    Ok(odds_ratio([[inc(row), cor(row)], [inc_all - inc(row), cor_all - cor(row)]]))
}

// ------------------------------------------------------------ multinomial

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicEncoding {
    /// Intercept plus one indicator per non-reference topic (saturated).
    #[default]
    OneHot,
    /// Intercept plus the topic label read as a number.
    Numeric,
}

impl FromStr for TopicEncoding {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one_hot" | "onehot" => Ok(TopicEncoding::OneHot),
            "numeric" => Ok(TopicEncoding::Numeric),
            other => Err(Error::Config(format!("unknown topic encoding `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultinomialFit {
    pub encoding: TopicEncoding,
    pub topics: Vec<String>,
    pub classes: Vec<String>,
    /// Predicted class probabilities per topic (rows sum to one).
    pub probs: Vec<Vec<f64>>,
    pub ci: Vec<Vec<(f64, f64)>>,
    pub loglik: f64,
    pub iterations: usize,
    pub n_boot_failed: usize,
}

fn topic_row(encoding: TopicEncoding, topics: &[String], t: usize) -> Result<Vec<f64>> {
    Ok(match encoding {
        TopicEncoding::OneHot => {
            let mut r = vec![0.0; topics.len()];
            r[0] = 1.0;
            if t > 0 {
                r[t] = 1.0;
            }
            r
        }
        TopicEncoding::Numeric => {
            let v: f64 = topics[t].parse().map_err(|_| Error::Data(format!("topic `{}` is not numeric", topics[t])))?;
            vec![1.0, v]
        }
    })
}

fn softmax_row(x: &[f64], beta: &DMatrix<f64>) -> Vec<f64> {
    // beta: p × (K−1); class 0 is the reference with linear predictor 0.
    let k1 = beta.ncols();
    let mut eta = vec![0.0; k1 + 1];
    for k in 0..k1 {
        eta[k + 1] = x.iter().enumerate().map(|(j, v)| v * beta[(j, k)]).sum();
    }
    let m = eta.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = eta.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Newton fit on aggregated counts (one design row per topic).
fn fit_grouped(xs: &[Vec<f64>], counts: &[Vec<f64>], max_iter: usize) -> Result<(DMatrix<f64>, f64, usize)> {
    let p = xs[0].len();
    let k = counts[0].len();
    let k1 = k - 1;
    let dim = p * k1;
    let mut beta = DMatrix::<f64>::zeros(p, k1);
    let ll_of = |b: &DMatrix<f64>| -> f64 {
        xs.iter()
            .zip(counts)
            .map(|(x, c)| {
                let pr = softmax_row(x, b);
                c.iter().zip(&pr).filter(|(&ci, _)| ci > 0.0).map(|(ci, pi)| ci * pi.ln()).sum::<f64>()
            })
            .sum()
    };
    let mut ll = ll_of(&beta);
    for it in 0..max_iter {
        let mut grad = DVector::<f64>::zeros(dim);
        let mut hess = DMatrix::<f64>::zeros(dim, dim);
        for (x, c) in xs.iter().zip(counts) {
            let m: f64 = c.iter().sum();
            if m == 0.0 {
                continue;
            }
            let pr = softmax_row(x, &beta);
            for a in 0..k1 {
                let ra = c[a + 1] - m * pr[a + 1];
                for j in 0..p {
                    grad[a * p + j] += x[j] * ra;
                }
                for b in 0..k1 {
                    let w = m * (if a == b { pr[a + 1] } else { 0.0 } - pr[a + 1] * pr[b + 1]);
                    for j in 0..p {
                        for l in 0..p {
                            hess[(a * p + j, b * p + l)] += w * x[j] * x[l];
                        }
                    }
                }
            }
        }
        if grad.norm() < 1e-9 {
            return Ok((beta, ll, it));
        }
        let mut h = hess.clone();
        let step = loop {
            if let Some(ch) = h.clone().cholesky() {
                break ch.solve(&grad);
            }
            let lift = 1e-8 * (1.0 + hess.diagonal().amax());
            for d in 0..dim {
                h[(d, d)] += lift;
            }
        };
        let mut t = 1.0;
        loop {
            let cand = &beta + DMatrix::from_fn(p, k1, |j, a| step[a * p + j] * t);
            let ll_c = ll_of(&cand);
            if ll_c >= ll - 1e-12 * ll.abs().max(1.0) || t < 1e-10 {
                let gain = ll_c - ll;
                beta = cand;
                ll = ll_c;
                if gain.abs() < 1e-13 * ll.abs().max(1.0) && t < 1.0 {
                    return Ok((beta, ll, it + 1));
                }
                break;
            }
            t /= 2.0;
        }
    }
    // Saturated fits with empty cells drift towards the boundary; the
    // probabilities are converged long before the coefficients.
    Ok((beta, ll, max_iter))
}

fn predict_all(xs: &[Vec<f64>], beta: &DMatrix<f64>) -> Vec<Vec<f64>> {
    xs.iter().map(|x| softmax_row(x, beta)).collect()
}

/// Multinomial logistic regression of outcome on topic, with a document
/// bootstrap for the predicted probabilities.
pub fn fit_multinomial(
    table: &ContingencyTable,
    encoding: TopicEncoding,
    n_boot: usize,
    seed: u64,
) -> Result<MultinomialFit> {
    let keep: Vec<usize> = (0..table.rows.len()).filter(|&i| table.counts[i].iter().sum::<f64>() > 0.0).collect();
    if keep.len() < table.rows.len() {
        warn!("{} empty topics dropped from the multinomial fit", table.rows.len() - keep.len());
    }
    let t = ContingencyTable {
        rows: keep.iter().map(|&i| table.rows[i].clone()).collect(),
        cols: table.cols.clone(),
        counts: keep.iter().map(|&i| table.counts[i].clone()).collect(),
    };
    let observed = (0..t.cols.len()).filter(|&j| t.counts.iter().any(|r| r[j] > 0.0)).count();
    if observed < 2 {
        return Err(Error::Data("multinomial fit needs at least two observed categories".into()));
    }
    if t.rows.is_empty() {
        return Err(Error::Data("no labelled documents".into()));
    }
    let xs: Vec<Vec<f64>> = (0..t.rows.len()).map(|i| topic_row(encoding, &t.rows, i)).collect::<Result<_>>()?;
    let (beta, loglik, iterations) = fit_grouped(&xs, &t.counts, 200)?;
    let probs = predict_all(&xs, &beta);
    let bs = derive_seed(seed, &["multinomial"]);
    let reps: Vec<Option<Vec<Vec<f64>>>> = (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let r = t.resample(&mut stream_rng(bs, b as u64));
            // A topic absent from the replicate leaves its indicator empty.
            if encoding == TopicEncoding::OneHot && r.counts.iter().any(|row| row.iter().sum::<f64>() == 0.0) {
                return None;
            }
            fit_grouped(&xs, &r.counts, 200).ok().map(|(b, _, _)| predict_all(&xs, &b))
        })
        .collect();
    let ok: Vec<&Vec<Vec<f64>>> = reps.iter().flatten().collect();
    let ci = (0..t.rows.len())
        .map(|i| {
            (0..t.cols.len())
                .map(|k| percentile_interval(&ok.iter().map(|r| r[i][k]).collect::<Vec<_>>(), 0.95))
                .collect()
        })
        .collect();
    Ok(MultinomialFit {
        encoding,
        topics: t.rows.clone(),
        classes: t.cols.clone(),
        probs,
        ci,
        loglik,
        iterations,
        n_boot_failed: n_boot - ok.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_labels() {
        assert_eq!(Outcome::new(Truth::AI, IdentityJudgment::Human).label(), "AI_Human");
        assert_eq!(Outcome::new(Truth::Human, IdentityJudgment::NotSure), Outcome::NotSure);
        assert_eq!("Human_AI".parse::<Outcome>().unwrap(), Outcome::HumanAi);
    }

    #[test]
    fn tokenizer_rules() {
        assert_eq!(tokenize("It's FAST, a 2x bot!"), vec!["it", "fast", "bot"]);
    }

    #[test]
    fn v_extremes() {
        let ind = ContingencyTable::new(vec![vec![25.0, 25.0], vec![25.0, 25.0]]);
        assert_eq!(cramers_v(&ind, 0, 1).unwrap().v, 0.0);
        let id = ContingencyTable::new(vec![vec![10.0, 0.0], vec![0.0, 10.0]]);
        assert!((cramers_v(&id, 0, 1).unwrap().v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mi_of_identical_uniform_labels_is_log_k() {
        let a: Vec<u8> = (0..300).map(|i| (i % 3) as u8).collect();
        let mi = mutual_information(&a, &a, 0, 1).unwrap();
        assert!((mi.nats - 3f64.ln()).abs() < 1e-12);
        assert!((mi.bits - 3f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn odds_ratio_rules() {
        assert_eq!(odds_ratio([[10.0, 10.0], [10.0, 10.0]]).or, 1.0);
        let z = odds_ratio([[0.0, 5.0], [5.0, 5.0]]);
        assert!(z.haldane && z.or.is_finite() && z.or > 0.0);
    }

    #[test]
    fn saturated_multinomial_matches_frequencies() {
        let t = ContingencyTable::new(vec![vec![5.0, 3.0, 2.0], vec![1.0, 6.0, 3.0], vec![4.0, 4.0, 8.0]]);
        let fit = fit_multinomial(&t, TopicEncoding::OneHot, 0, 1).unwrap();
        for (row, p) in t.counts.iter().zip(&fit.probs) {
            let n: f64 = row.iter().sum();
            for (c, q) in row.iter().zip(p) {
                assert!((c / n - q).abs() < 1e-8);
            }
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}
