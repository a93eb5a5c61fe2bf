//! Per-(group, target) cue profiles, z-scoring and the judgment merge.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dictionary::CueDictionary;
use super::mtld::mtld;
use crate::error::{Error, Result};
use crate::model::{Condition, GroupRecord, JudgmentRecord, Ratings, TaskDomain, Truth, Utterance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    Authenticity,
    FunctionWordRate,
    AffectDensity,
    ToneScore,
    NegationRate,
    AnalyticStyle,
    Conversationality,
    LatencyMeanS,
    LatencyVarS,
    LexicalDiversity,
    MessageCount,
    TotalWords,
}

impl Feature {
    pub const ALL: [Feature; 12] = [
        Feature::Authenticity,
        Feature::FunctionWordRate,
        Feature::AffectDensity,
        Feature::ToneScore,
        Feature::NegationRate,
        Feature::AnalyticStyle,
        Feature::Conversationality,
        Feature::LatencyMeanS,
        Feature::LatencyVarS,
        Feature::LexicalDiversity,
        Feature::MessageCount,
        Feature::TotalWords,
    ];
    /// The ten behavioral predictors.
    pub const PREDICTORS: [Feature; 10] = [
        Feature::Authenticity,
        Feature::FunctionWordRate,
        Feature::AffectDensity,
        Feature::ToneScore,
        Feature::NegationRate,
        Feature::AnalyticStyle,
        Feature::Conversationality,
        Feature::LatencyMeanS,
        Feature::LatencyVarS,
        Feature::LexicalDiversity,
    ];
    pub const DICTIONARY: [Feature; 7] = [
        Feature::Authenticity,
        Feature::FunctionWordRate,
        Feature::AffectDensity,
        Feature::ToneScore,
        Feature::NegationRate,
        Feature::AnalyticStyle,
        Feature::Conversationality,
    ];
    pub const TIMING: [Feature; 2] = [Feature::LatencyMeanS, Feature::LatencyVarS];
    pub const EXPOSURE: [Feature; 2] = [Feature::MessageCount, Feature::TotalWords];

    pub fn name(self) -> &'static str {
        match self {
            Feature::Authenticity => "authenticity",
            Feature::FunctionWordRate => "function_word_rate",
            Feature::AffectDensity => "affect_density",
            Feature::ToneScore => "tone_score",
            Feature::NegationRate => "negation_rate",
            Feature::AnalyticStyle => "analytic_style",
            Feature::Conversationality => "conversationality",
            Feature::LatencyMeanS => "latency_mean_s",
            Feature::LatencyVarS => "latency_var_s",
            Feature::LexicalDiversity => "lexical_diversity",
            Feature::MessageCount => "message_count",
            Feature::TotalWords => "total_words",
        }
    }

    pub fn index(self) -> usize {
        Feature::ALL.iter().position(|&f| f == self).unwrap()
    }

    pub fn is_timing(self) -> bool {
        Feature::TIMING.contains(&self)
    }
}

impl FromStr for Feature {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Feature::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| Error::Config(format!("unknown feature `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatencyMode {
    /// Gap to the preceding message by anyone in the group.
    #[default]
    InterMessage,
    /// Gap to the same speaker's own preceding message.
    SameSpeaker,
}

impl FromStr for LatencyMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inter_message" => Ok(LatencyMode::InterMessage),
            "same_speaker" => Ok(LatencyMode::SameSpeaker),
            _ => Err(Error::Config(format!("unknown latency mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CueConfig {
    pub latency_mode: LatencyMode,
    pub mtld_threshold: f64,
}

impl Default for CueConfig {
    fn default() -> Self {
        CueConfig { latency_mode: LatencyMode::InterMessage, mtld_threshold: 0.72 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CueProfile {
    pub group_id: String,
    pub target: String,
    pub truth: Option<Truth>,
    pub values: [Option<f64>; 12],
}

impl CueProfile {
    pub fn get(&self, f: Feature) -> Option<f64> {
        self.values[f.index()]
    }

    pub fn set(&mut self, f: Feature, v: Option<f64>) {
        self.values[f.index()] = v;
    }

    pub fn is_complete(&self, features: &[Feature]) -> bool {
        features.iter().all(|&f| self.get(f).is_some())
    }
}

/// Recomputes `latency_s` in place. Messages are taken in timestamp order
/// within each group; the first message (per group, or per speaker) has none.
pub fn assign_latencies(utterances: &mut [Utterance], mode: LatencyMode) {
    let mut order: Vec<usize> = (0..utterances.len()).collect();
    order.sort_by(|&a, &b| {
        (utterances[a].group_id.as_str(), utterances[a].ts_ms)
            .cmp(&(utterances[b].group_id.as_str(), utterances[b].ts_ms))
            .then(a.cmp(&b))
    });
    let mut last: HashMap<(String, String), u64> = HashMap::new();
    for i in order {
        let u = &utterances[i];
        let key = match mode {
            LatencyMode::InterMessage => (u.group_id.clone(), String::new()),
            LatencyMode::SameSpeaker => (u.group_id.clone(), u.speaker.clone()),
        };
        let prev = last.insert(key, u.ts_ms);
        utterances[i].latency_s = prev.map(|p| (u.ts_ms - p) as f64 / 1000.0);
    }
}

/// Fills each utterance's per-message cue values.
pub fn score_utterances(dict: &CueDictionary, utterances: &mut [Utterance]) {
    utterances.par_iter_mut().for_each(|u| {
        let s = dict.score(&u.text);
        u.word_count = s.word_count;
        u.cue_values = s.values;
    });
}

/// Aggregates one target's utterances (already scored) into a profile.
pub fn aggregate_target(
    group_id: &str,
    target: &str,
    truth: Option<Truth>,
    utterances: &[&Utterance],
    mtld_threshold: f64,
) -> CueProfile {
    let mut p = CueProfile { group_id: group_id.to_string(), target: target.to_string(), truth, values: [None; 12] };
    let total_wc: f64 = utterances.iter().map(|u| u.word_count as f64).sum();
    for f in Feature::DICTIONARY {
        if total_wc > 0.0 {
            let num: f64 = utterances
                .iter()
                .map(|u| u.cue_values.get(f.name()).copied().unwrap_or(0.0) * u.word_count as f64)
                .sum();
            p.set(f, Some(num / total_wc));
        }
    }
    let lats: Vec<f64> = utterances.iter().filter_map(|u| u.latency_s).collect();
    if !lats.is_empty() {
        p.set(Feature::LatencyMeanS, Some(crate::numeric::mean(&lats)));
        let var = if lats.len() == 1 { 0.0 } else { crate::numeric::variance(&lats, 1) };
        p.set(Feature::LatencyVarS, Some(var));
    }
    let mut ordered: Vec<&&Utterance> = utterances.iter().collect();
    ordered.sort_by_key(|u| u.ts_ms);
    let stream = ordered.iter().map(|u| u.text.as_str()).collect::<Vec<_>>().join(" ");
    p.set(Feature::LexicalDiversity, mtld(&stream, mtld_threshold));
    p.set(Feature::MessageCount, Some(utterances.len() as f64));
    p.set(Feature::TotalWords, Some(total_wc));
    p
}

/// Scores utterances, assigns latencies and aggregates one profile per roster
/// member (in group order, then roster order).
pub fn extract_profiles(
    dict: &CueDictionary,
    groups: &[GroupRecord],
    utterances: &[Utterance],
    cfg: &CueConfig,
) -> (Vec<Utterance>, Vec<CueProfile>) {
    let mut utts = utterances.to_vec();
    assign_latencies(&mut utts, cfg.latency_mode);
    score_utterances(dict, &mut utts);
    let mut by_target: HashMap<(&str, &str), Vec<&Utterance>> = HashMap::new();
    for u in &utts {
        by_target.entry((u.group_id.as_str(), u.speaker.as_str())).or_default().push(u);
    }
    let keys: Vec<(&GroupRecord, &crate::model::Participant)> =
        groups.iter().flat_map(|g| g.roster.iter().map(move |p| (g, p))).collect();
    let profiles = keys
        .par_iter()
        .map(|(g, p)| {
            let empty = Vec::new();
            let us = by_target.get(&(g.group_id.as_str(), p.pseudonym.as_str())).unwrap_or(&empty);
            aggregate_target(&g.group_id, &p.pseudonym, Some(p.truth()), us, cfg.mtld_threshold)
        })
        .collect();
    (utts, profiles)
}

/// z-scored columns (population sd) with the transform used.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub names: Vec<String>,
    /// Indices of the input rows that were kept.
    pub rows: Vec<usize>,
    /// Row-major z-scores, one vector per kept row.
    pub z: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
    pub dropped: usize,
}

impl Standardized {
    pub fn unstandardize(&self, row: usize, col: usize) -> f64 {
        self.z[row][col] * self.sds[col] + self.means[col]
    }
}

/// Drops rows with any missing value, then z-scores each column.
pub fn standardize(names: &[String], rows: &[Vec<Option<f64>>]) -> Result<Standardized> {
    let kept: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].iter().all(|v| v.is_some())).collect();
    let k = names.len();
    if kept.len() < 2 {
        return Err(Error::Data(format!("standardize needs >= 2 complete rows, got {}", kept.len())));
    }
    let mut means = vec![0.0; k];
    let mut sds = vec![0.0; k];
    for c in 0..k {
        let col: Vec<f64> = kept.iter().map(|&i| rows[i][c].unwrap()).collect();
        let m = crate::numeric::mean(&col);
        let sd = crate::numeric::variance(&col, 0).sqrt();
        if !(sd > 1e-12 * (1.0 + m.abs())) {
            return Err(Error::DegenerateCue(names[c].clone()));
        }
        means[c] = m;
        sds[c] = sd;
    }
    let z = kept.iter().map(|&i| (0..k).map(|c| (rows[i][c].unwrap() - means[c]) / sds[c]).collect()).collect();
    Ok(Standardized { names: names.to_vec(), dropped: rows.len() - kept.len(), rows: kept, z, means, sds })
}

pub fn standardize_profiles(profiles: &[CueProfile], features: &[Feature]) -> Result<Standardized> {
    let names: Vec<String> = features.iter().map(|f| f.name().to_string()).collect();
    let rows: Vec<Vec<Option<f64>>> = profiles.iter().map(|p| features.iter().map(|&f| p.get(f)).collect()).collect();
    standardize(&names, &rows)
}

/// One judgment joined with its target's profile and group design.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedRow {
    pub judgment: JudgmentRecord,
    pub condition: Condition,
    pub task: TaskDomain,
    pub values: [Option<f64>; 12],
}

impl MergedRow {
    pub fn get(&self, f: Feature) -> Option<f64> {
        self.values[f.index()]
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergeReport {
    pub judgments: usize,
    pub kept: usize,
    pub missing_profile: usize,
    pub incomplete: usize,
}

/// Key-exact merge on (group, target). Rows whose profile lacks any
/// `required` feature are dropped and counted, never filled.
pub fn merge(
    judgments: &[JudgmentRecord],
    groups: &[GroupRecord],
    profiles: &[CueProfile],
    required: &[Feature],
) -> (Vec<MergedRow>, MergeReport) {
    let by_key: HashMap<(&str, &str), &CueProfile> =
        profiles.iter().map(|p| ((p.group_id.as_str(), p.target.as_str()), p)).collect();
    let by_group: HashMap<&str, &GroupRecord> = groups.iter().map(|g| (g.group_id.as_str(), g)).collect();
    let mut report = MergeReport { judgments: judgments.len(), ..Default::default() };
    let mut rows = Vec::new();
    for j in judgments {
        let (Some(p), Some(g)) =
            (by_key.get(&(j.group_id.as_str(), j.target.as_str())), by_group.get(j.group_id.as_str()))
        else {
            report.missing_profile += 1;
            continue;
        };
        if !p.is_complete(required) {
            report.incomplete += 1;
            continue;
        }
        rows.push(MergedRow { judgment: j.clone(), condition: g.condition, task: g.task, values: p.values });
    }
    report.kept = rows.len();
    (rows, report)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn parse_opt(s: &str, line: usize) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        s.trim().parse::<f64>().map(Some).map_err(|e| Error::Data(format!("row {line}: `{s}`: {e}")))
    }
}

pub fn write_profiles<W: Write>(w: W, profiles: &[CueProfile]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["group_id", "target", "truth"];
    header.extend(Feature::ALL.iter().map(|f| f.name()));
    wtr.write_record(&header)?;
    for p in profiles {
        let mut rec =
            vec![p.group_id.clone(), p.target.clone(), p.truth.map(|t| t.as_str().to_string()).unwrap_or_default()];
        rec.extend(p.values.iter().map(|v| fmt_opt(*v)));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_profiles<R: Read>(r: R) -> Result<Vec<CueProfile>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let col = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Error::Data(format!("cues.csv lacks column {name}")))
    };
    let gi = col("group_id")?;
    let ti = col("target")?;
    let tri = col("truth")?;
    let fi: Vec<usize> = Feature::ALL.iter().map(|f| col(f.name())).collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut values = [None; 12];
        for (k, &c) in fi.iter().enumerate() {
            values[k] = parse_opt(&rec[c], line + 2)?;
        }
        let truth = if rec[tri].is_empty() { None } else { Some(rec[tri].parse()?) };
        out.push(CueProfile { group_id: rec[gi].to_string(), target: rec[ti].to_string(), truth, values });
    }
    Ok(out)
}

const MERGED_FIXED: [&str; 11] = [
    "rater_id",
    "group_id",
    "target",
    "condition",
    "task",
    "judgment",
    "truth",
    "humanness",
    "trust",
    "supportiveness",
    "conflictuality",
];

pub fn write_merged<W: Write>(w: W, rows: &[MergedRow]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header: Vec<&str> = MERGED_FIXED.to_vec();
    header.extend(Feature::ALL.iter().map(|f| f.name()));
    header.push("impression_text");
    wtr.write_record(&header)?;
    for r in rows {
        let j = &r.judgment;
        let mut rec = vec![
            j.rater_id.clone(),
            j.group_id.clone(),
            j.target.clone(),
            r.condition.label().to_string(),
            r.task.code().to_string(),
            j.judgment.as_str().to_string(),
            j.truth.map(|t| t.as_str().to_string()).unwrap_or_default(),
            j.ratings.humanness.to_string(),
            j.ratings.trust.to_string(),
            j.ratings.supportiveness.to_string(),
            j.ratings.conflictuality.to_string(),
        ];
        rec.extend(r.values.iter().map(|v| fmt_opt(*v)));
        rec.push(j.impression_text.clone());
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_merged<R: Read>(r: R) -> Result<Vec<MergedRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let idx: BTreeMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let col =
        |name: &str| idx.get(name).copied().ok_or_else(|| Error::Data(format!("merged table lacks column {name}")));
    let fixed: Vec<usize> = MERGED_FIXED.iter().map(|n| col(n)).collect::<Result<_>>()?;
    let fi: Vec<usize> = Feature::ALL.iter().map(|f| col(f.name())).collect::<Result<_>>()?;
    let text_col = idx.get("impression_text").copied();
    let mut out = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let f = |k: usize| &rec[fixed[k]];
        let rating = |k: usize| -> Result<u8> {
            f(k).parse::<u8>().map_err(|e| Error::Data(format!("row {}: rating `{}`: {e}", line + 2, f(k))))
        };
        let ratings = Ratings {
            humanness: rating(7)?,
            trust: rating(8)?,
            supportiveness: rating(9)?,
            conflictuality: rating(10)?,
        };
        ratings.validate()?;
        let mut values = [None; 12];
        for (k, &c) in fi.iter().enumerate() {
            values[k] = parse_opt(&rec[c], line + 2)?;
        }
        out.push(MergedRow {
            judgment: JudgmentRecord {
                rater_id: f(0).to_string(),
                group_id: f(1).to_string(),
                target: f(2).to_string(),
                ratings,
                judgment: f(5).parse()?,
                impression_text: text_col.map(|c| rec[c].to_string()).unwrap_or_default(),
                truth: if f(6).is_empty() { None } else { Some(f(6).parse()?) },
            },
            condition: f(3).parse()?,
            task: f(4).parse()?,
            values,
        });
    }
    Ok(out)
}
