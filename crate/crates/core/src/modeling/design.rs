//! Model specifications and design matrices (reference-cell dummies,
//! z-scored continuous predictors).

use std::collections::{BTreeSet, HashMap};
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cues::{standardize, CueProfile, Feature, MergedRow};
use crate::error::{Error, Result};
use crate::model::{Composition, Condition, GroupRecord, IdentityJudgment, TaskDomain, Truth};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Judged AI (1) versus judged Human (0); one row per judgment.
    AiVsHuman,
    /// Judged Not sure (1) versus judged Human (0).
    NotSureVsHuman,
    /// True AI versus human among targets of mixed triads (2 humans + 1 AI).
    TruthH2,
    /// True AI versus human among all evaluated targets.
    TruthFull,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::AiVsHuman => "ai_vs_human",
            ModelKind::NotSureVsHuman => "notsure_vs_human",
            ModelKind::TruthH2 => "truth_h2",
            ModelKind::TruthFull => "truth_full",
        }
    }

    pub fn is_truth(self) -> bool {
        matches!(self, ModelKind::TruthH2 | ModelKind::TruthFull)
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ai_vs_human" => Ok(ModelKind::AiVsHuman),
            "notsure_vs_human" => Ok(ModelKind::NotSureVsHuman),
            "truth_h2" => Ok(ModelKind::TruthH2),
            "truth_full" => Ok(ModelKind::TruthFull),
            _ => Err(Error::Config(format!("unknown model `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub features: Vec<Feature>,
    pub task_dummies: bool,
    pub condition_dummies: bool,
    /// Message count and total words as z-scored covariates.
    pub exposure: bool,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        ModelSpec {
            kind,
            features: Feature::PREDICTORS.to_vec(),
            task_dummies: true,
            condition_dummies: true,
            exposure: true,
        }
    }

    /// Same pipeline without the two latency features.
    pub fn ablate_timing(&self) -> Result<Self> {
        if !Feature::TIMING.iter().all(|f| self.features.contains(f)) {
            return Err(Error::Config("spec has no latency features to ablate".into()));
        }
        let mut s = self.clone();
        s.features.retain(|f| !f.is_timing());
        Ok(s)
    }

    /// Every feature that must be present for a row to enter.
    pub fn required(&self) -> Vec<Feature> {
        let mut r = self.features.clone();
        if self.exposure {
            r.extend(Feature::EXPOSURE);
        }
        r
    }
}

/// One evaluated target with its profile and group design.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetRow {
    pub group_id: String,
    pub target: String,
    pub condition: Condition,
    pub task: TaskDomain,
    pub truth: Truth,
    pub values: [Option<f64>; 12],
}

/// Joins profiles with group metadata. With `evaluated`, only targets that
/// received at least one judgment are kept.
pub fn target_rows(
    groups: &[GroupRecord],
    profiles: &[CueProfile],
    evaluated: Option<&BTreeSet<(String, String)>>,
) -> Result<Vec<TargetRow>> {
    let by_group: HashMap<&str, &GroupRecord> = groups.iter().map(|g| (g.group_id.as_str(), g)).collect();
    let mut out = Vec::new();
    for p in profiles {
        let g = by_group
            .get(p.group_id.as_str())
            .ok_or_else(|| Error::Data(format!("profile for unknown group {}", p.group_id)))?;
        if let Some(ev) = evaluated {
            if !ev.contains(&(p.group_id.clone(), p.target.clone())) {
                continue;
            }
        }
        let truth = g
            .member(&p.target)
            .map(|m| m.truth())
            .ok_or_else(|| Error::UnresolvedTargets(vec![format!("{}/{}", p.group_id, p.target)]))?;
        out.push(TargetRow {
            group_id: p.group_id.clone(),
            target: p.target.clone(),
            condition: g.condition,
            task: g.task,
            truth,
            values: p.values,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub spec: ModelSpec,
    pub names: Vec<String>,
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    /// Intercept plus covariate columns: the LR-test null model.
    pub null_cols: Vec<usize>,
    pub feature_cols: Vec<usize>,
    pub groups: Vec<String>,
    pub raters: Vec<String>,
    pub targets: Vec<String>,
    /// Candidate rows dropped for missing values.
    pub dropped: usize,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn clusters(&self, level: super::ClusterLevel) -> Option<Vec<String>> {
        match level {
            super::ClusterLevel::Participant if !self.raters.is_empty() => Some(self.raters.clone()),
            super::ClusterLevel::Participant => {
                Some(self.targets.iter().zip(&self.groups).map(|(t, g)| format!("{g}/{t}")).collect())
            }
            super::ClusterLevel::Group => Some(self.groups.clone()),
            super::ClusterLevel::None => None,
        }
    }

    pub fn with_y(&self, y: Vec<f64>) -> Dataset {
        Dataset { y, ..self.clone() }
    }

    /// Keeps the groups with exactly one positive row; returns the dropped
    /// group ids. Conditional fits and triad tests need this after
    /// complete-case filtering has removed a member.
    pub fn single_positive_strata(&self) -> (Dataset, Vec<String>) {
        let idx = super::conditional::strata_index(&self.groups);
        let (keep, drop): (Vec<&Vec<usize>>, Vec<&Vec<usize>>) =
            idx.iter().partition(|s| s.iter().filter(|&&i| self.y[i] == 1.0).count() == 1);
        let mut rows: Vec<usize> = keep.into_iter().flatten().copied().collect();
        rows.sort_unstable();
        let mut ds = self.subset(&rows);
        ds.dropped = self.dropped;
        (ds, drop.iter().map(|s| self.groups[s[0]].clone()).collect())
    }

    pub fn subset(&self, rows: &[usize]) -> Dataset {
        let pick = |v: &Vec<String>| if v.is_empty() { vec![] } else { rows.iter().map(|&i| v[i].clone()).collect() };
        Dataset {
            spec: self.spec.clone(),
            names: self.names.clone(),
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            null_cols: self.null_cols.clone(),
            feature_cols: self.feature_cols.clone(),
            groups: pick(&self.groups),
            raters: pick(&self.raters),
            targets: pick(&self.targets),
            dropped: 0,
            means: self.means.clone(),
            sds: self.sds.clone(),
        }
    }
}

struct Candidate<'a> {
    group: &'a str,
    rater: Option<&'a str>,
    target: &'a str,
    condition: Condition,
    task: TaskDomain,
    values: &'a [Option<f64>; 12],
    y: f64,
}

/// Dataset for a judgment model (one row per judgment).
pub fn judgment_dataset(rows: &[MergedRow], spec: &ModelSpec, extra_required: &[Feature]) -> Result<Dataset> {
    let positive = match spec.kind {
        ModelKind::AiVsHuman => IdentityJudgment::AI,
        ModelKind::NotSureVsHuman => IdentityJudgment::NotSure,
        k => return Err(Error::Config(format!("{} is a truth model", k.name()))),
    };
    let cands: Vec<Candidate> = rows
        .iter()
        .filter(|r| r.judgment.judgment == positive || r.judgment.judgment == IdentityJudgment::Human)
        .map(|r| Candidate {
            group: &r.judgment.group_id,
            rater: Some(&r.judgment.rater_id),
            target: &r.judgment.target,
            condition: r.condition,
            task: r.task,
            values: &r.values,
            y: if r.judgment.judgment == positive { 1.0 } else { 0.0 },
        })
        .collect();
    build(cands, spec, extra_required)
}

/// Dataset for a truth model (one row per evaluated target).
pub fn truth_dataset(rows: &[TargetRow], spec: &ModelSpec, extra_required: &[Feature]) -> Result<Dataset> {
    let h2_only = match spec.kind {
        ModelKind::TruthH2 => true,
        ModelKind::TruthFull => false,
        k => return Err(Error::Config(format!("{} is a judgment model", k.name()))),
    };
    let cands: Vec<Candidate> = rows
        .iter()
        .filter(|r| !h2_only || r.condition.composition == Composition::H2Ai1)
        .map(|r| Candidate {
            group: &r.group_id,
            rater: None,
            target: &r.target,
            condition: r.condition,
            task: r.task,
            values: &r.values,
            y: if r.truth == Truth::AI { 1.0 } else { 0.0 },
        })
        .collect();
    build(cands, spec, extra_required)
}

fn build(cands: Vec<Candidate>, spec: &ModelSpec, extra_required: &[Feature]) -> Result<Dataset> {
    let mut continuous: Vec<Feature> = Vec::new();
    if spec.exposure {
        continuous.extend(Feature::EXPOSURE);
    }
    continuous.extend(spec.features.iter().copied());
    let required: Vec<Feature> = continuous.iter().chain(extra_required).copied().collect();
    let complete: Vec<&Candidate> =
        cands.iter().filter(|c| required.iter().all(|f| c.values[f.index()].is_some())).collect();
    let dropped = cands.len() - complete.len();
    if complete.is_empty() {
        return Err(Error::Data(format!("no complete rows for model {}", spec.kind.name())));
    }
    let cont_names: Vec<String> = continuous.iter().map(|f| f.name().to_string()).collect();
    let raw: Vec<Vec<Option<f64>>> =
        complete.iter().map(|c| continuous.iter().map(|f| c.values[f.index()]).collect()).collect();
    let z = standardize(&cont_names, &raw)?;

    let task_levels: Vec<&str> = if spec.task_dummies {
        let s: BTreeSet<&str> = complete.iter().map(|c| c.task.code()).collect();
        s.into_iter().skip(1).collect()
    } else {
        vec![]
    };
    let cond_levels: Vec<&str> = if spec.condition_dummies {
        let s: BTreeSet<&str> = complete.iter().map(|c| c.condition.label()).collect();
        s.into_iter().skip(1).collect()
    } else {
        vec![]
    };
    let mut names = vec!["(intercept)".to_string()];
    names.extend(task_levels.iter().map(|l| format!("task[{l}]")));
    names.extend(cond_levels.iter().map(|l| format!("condition[{l}]")));
    let n_exposure = if spec.exposure { Feature::EXPOSURE.len() } else { 0 };
    let first_cont = names.len();
    names.extend(cont_names.iter().cloned());
    let n = complete.len();
    let p = names.len();
    let mut x = DMatrix::zeros(n, p);
    for (i, c) in complete.iter().enumerate() {
        x[(i, 0)] = 1.0;
        let mut j = 1;
        for l in &task_levels {
            x[(i, j)] = (c.task.code() == *l) as u8 as f64;
            j += 1;
        }
        for l in &cond_levels {
            x[(i, j)] = (c.condition.label() == *l) as u8 as f64;
            j += 1;
        }
        for k in 0..continuous.len() {
            x[(i, first_cont + k)] = z.z[i][k];
        }
    }
    let null_cols: Vec<usize> = (0..first_cont + n_exposure).collect();
    let feature_cols: Vec<usize> = (first_cont + n_exposure..p).collect();
    Ok(Dataset {
        spec: spec.clone(),
        names,
        x,
        y: complete.iter().map(|c| c.y).collect(),
        null_cols,
        feature_cols,
        groups: complete.iter().map(|c| c.group.to_string()).collect(),
        raters: if complete.iter().all(|c| c.rater.is_some()) {
            complete.iter().map(|c| c.rater.unwrap().to_string()).collect()
        } else {
            vec![]
        },
        targets: complete.iter().map(|c| c.target.to_string()).collect(),
        dropped,
        means: z.means,
        sds: z.sds,
    })
}
