//! Headless synthetic experiments. Text is emitted token by token from the
//! dictionary's category word pools plus neutral filler, so cue extraction
//! reads back whatever identity effect was planted.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::SchedulerConfig;
use crate::cues::{extract_profiles, CueConfig, CueDictionary, CueProfile, Feature};
use crate::engine::{AgentDriver, EvalBundle, SessionConfig, SessionState};
use crate::error::{Error, Result};
use crate::model::{
    join_truth, Condition, EventLog, GroupRecord, IdentityJudgment, JudgmentRecord, Participant, Role, TaskDomain,
    Truth, Utterance,
};
use crate::modeling::{target_rows, TargetRow};
use crate::numeric::derive_seed;

const FILLER: &str = "room water map rope knife lighter fire plan item list story hero city ship robot future world \
    people team choice option rank first second third last place boat island desert mountain food shelter signal \
    mirror compass radio light night day morning year scene ending twist character villain friend family doctor \
    patient rule case choice money house car road river forest snow cold heat wind rain storm sun moon star sky \
    picture movie plot idea point step order group vote number time minute hour week start middle end part side \
    top bottom left right north south east west blue red green small big long short fast slow new old young \
    simple hard easy quick early late open close near far high low full empty";

/// Target-level latent shifts, in SD units, applied to agents only.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PlantedEffect {
    pub shifts: BTreeMap<String, f64>,
}

impl PlantedEffect {
    pub const SUPPORTED: [&'static str; 9] = [
        "authenticity",
        "function_word_rate",
        "affect_density",
        "tone_score",
        "negation_rate",
        "analytic_style",
        "conversationality",
        "latency_mean_s",
        "lexical_diversity",
    ];

    pub fn null() -> Self {
        Self::default()
    }

    /// Default planted world: four cues shifted by 1–2 SD.
    pub fn demo() -> Self {
        PlantedEffect {
            shifts: BTreeMap::from([
                ("conversationality".into(), 2.0),
                ("function_word_rate".into(), -1.4),
                ("analytic_style".into(), 1.5),
                ("negation_rate".into(), -1.0),
            ]),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in &self.shifts {
            if !Self::SUPPORTED.contains(&k.as_str()) {
                return Err(Error::Config(format!(
                    "cannot plant an effect on `{k}`; supported: {:?}",
                    Self::SUPPORTED
                )));
            }
            if !v.is_finite() {
                return Err(Error::Config(format!("planted shift for `{k}` is not finite")));
            }
        }
        Ok(())
    }

    pub fn shift(&self, cue: &str) -> f64 {
        self.shifts.get(cue).copied().unwrap_or(0.0)
    }

    pub fn is_null(&self) -> bool {
        self.shifts.values().all(|&v| v == 0.0)
    }
}

/// How each analysis cue loads on the emission categories.
fn loadings(cue: &str) -> &'static [(&'static str, f64)] {
    match cue {
        "authenticity" => &[("authentic", 1.0)],
        "function_word_rate" => &[("function", 1.0)],
        "affect_density" => &[("posemo", 1.0), ("negemo", 1.0)],
        "tone_score" => &[("posemo", 1.0), ("negemo", -1.0)],
        "negation_rate" => &[("negate", 1.0)],
        "analytic_style" => &[("analytic", 1.0)],
        "conversationality" => &[("conversation", 1.0)],
        _ => &[],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JudgePolicy {
    RandomGuess { p_ai: f64, p_human: f64, p_not_sure: f64 },
    CueThreshold { feature: Feature, cutpoint: f64 },
    Oracle,
}

impl Default for JudgePolicy {
    fn default() -> Self {
        JudgePolicy::RandomGuess { p_ai: 1.0 / 3.0, p_human: 1.0 / 3.0, p_not_sure: 1.0 / 3.0 }
    }
}

impl JudgePolicy {
    pub fn validate(&self) -> Result<()> {
        if let JudgePolicy::RandomGuess { p_ai, p_human, p_not_sure } = self {
            let ps = [*p_ai, *p_human, *p_not_sure];
            if ps.iter().any(|p| !(0.0..=1.0).contains(p)) || (ps.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::Config("random-guess probabilities must lie in [0, 1] and sum to 1".into()));
            }
        }
        Ok(())
    }
}

/// One identity judgment of a target under `policy`. Threshold judges
/// answer Not sure when the feature is missing.
pub fn judge(policy: &JudgePolicy, profile: &CueProfile, truth: Truth, rng: &mut impl Rng) -> IdentityJudgment {
    match policy {
        JudgePolicy::Oracle => match truth {
            Truth::AI => IdentityJudgment::AI,
            Truth::Human => IdentityJudgment::Human,
        },
        JudgePolicy::CueThreshold { feature, cutpoint } => match profile.get(*feature) {
            Some(v) if v > *cutpoint => IdentityJudgment::AI,
            Some(_) => IdentityJudgment::Human,
            None => IdentityJudgment::NotSure,
        },
        JudgePolicy::RandomGuess { p_ai, p_human, p_not_sure } => {
            let u: f64 = rng.random();
            if u < *p_ai {
                IdentityJudgment::AI
            } else if u < p_ai + p_human || *p_not_sure == 0.0 {
                IdentityJudgment::Human
            } else {
                IdentityJudgment::NotSure
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanModel {
    pub gap_median_s: f64,
    pub gap_sigma: f64,
    pub words_median: f64,
    pub words_sigma: f64,
    /// Per-token emission probability of each dictionary category.
    pub base_rates: BTreeMap<String, f64>,
    /// Log-scale effect of one latent SD on a category's emission rate.
    pub latent_loading: f64,
    /// Filler vocabulary size at latent 0.
    pub vocab_size: usize,
    pub judge: JudgePolicy,
    /// Share of humans who submit their evaluations.
    pub eval_rate: f64,
}

impl Default for HumanModel {
    fn default() -> Self {
        HumanModel {
            gap_median_s: 35.0,
            gap_sigma: 0.8,
            words_median: 8.0,
            words_sigma: 0.6,
            base_rates: BTreeMap::from([
                ("function".into(), 0.30),
                ("negate".into(), 0.03),
                ("posemo".into(), 0.04),
                ("negemo".into(), 0.03),
                ("analytic".into(), 0.05),
                ("conversation".into(), 0.05),
                ("authentic".into(), 0.06),
            ]),
            latent_loading: 1.0,
            vocab_size: 60,
            judge: JudgePolicy::default(),
            eval_rate: 1.0,
        }
    }
}

/// How simulated agents decide when to speak.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentTiming {
    /// Agents draw gaps from the human gap law (latency shifts rescale it),
    /// so a zero planted effect leaves agents indistinguishable.
    #[default]
    HumanGaps,
    /// Agents run the live participation scheduler; timing and message
    /// counts then differ structurally from humans.
    Scheduler,
}

/// Every simulated speaker writes at most this many words per message.
pub const MAX_WORDS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub n_groups: usize,
    pub condition_weights: BTreeMap<String, f64>,
    pub task_weights: BTreeMap<String, f64>,
    pub duration_s: f64,
    pub tick_ms: u64,
    pub timer_interval_s: f64,
    pub pseudonyms: Vec<String>,
    pub epoch_ms: u64,
    pub seed: u64,
    pub scheduler: SchedulerConfig,
    pub human: HumanModel,
    pub agent_timing: AgentTiming,
    pub planted: PlantedEffect,
}

impl Default for WorldConfig {
    fn default() -> Self {
        let e = crate::engine::EngineConfig::default();
        WorldConfig {
            n_groups: 10,
            condition_weights: e.condition_weights,
            task_weights: e.task_weights,
            duration_s: 600.0,
            tick_ms: 1000,
            timer_interval_s: 60.0,
            pseudonyms: e.pseudonyms,
            epoch_ms: 1_700_000_000_000,
            seed: 0,
            scheduler: SchedulerConfig::default(),
            human: HumanModel::default(),
            agent_timing: AgentTiming::default(),
            planted: PlantedEffect::null(),
        }
    }
}

impl WorldConfig {
    /// TOML unless the extension is `.json`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let w: WorldConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
            }
            _ => toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let w: WorldConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        w.validate()?;
        Ok(w)
    }

    /// Only conditions with positive weight, e.g. mixed triads only.
    pub fn with_conditions(mut self, labels: &[&str]) -> Self {
        self.condition_weights = labels.iter().map(|l| (l.to_string(), 1.0)).collect();
        self
    }

    fn engine_view(&self) -> crate::engine::EngineConfig {
        crate::engine::EngineConfig {
            condition_weights: self.condition_weights.clone(),
            task_weights: self.task_weights.clone(),
            pseudonyms: self.pseudonyms.clone(),
            scheduler: self.scheduler.clone(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_groups == 0 {
            return Err(Error::Config("n_groups must be at least 1".into()));
        }
        self.engine_view().validate()?;
        self.planted.validate()?;
        self.human.judge.validate()?;
        let h = &self.human;
        if !(h.gap_median_s > 0.0) || !(h.gap_sigma >= 0.0) || !(h.words_median >= 1.0) || !(h.words_sigma >= 0.0) {
            return Err(Error::Config("human gap median and word median must be positive".into()));
        }
        if h.base_rates.values().any(|p| !(0.0..1.0).contains(p)) || h.base_rates.values().sum::<f64>() >= 1.0 {
            return Err(Error::Config("base emission rates must be probabilities summing below 1".into()));
        }
        if !(0.0..=1.0).contains(&h.eval_rate) || h.vocab_size < 5 {
            return Err(Error::Config("eval_rate must be in [0, 1] and vocab_size at least 5".into()));
        }
        if !(self.duration_s > 0.0) || self.tick_ms == 0 {
            return Err(Error::Config("duration and tick must be positive".into()));
        }
        Ok(())
    }
}

/// A target's speaking style.
#[derive(Debug, Clone)]
struct Style {
    categories: Vec<(Vec<String>, f64)>,
    filler: Vec<String>,
    words: LogNormal<f64>,
}

impl Style {
    fn new(world: &WorldConfig, pools: &Pools, latent: &BTreeMap<&str, f64>, rng: &mut impl Rng) -> Self {
        let h = &world.human;
        let mut cats: Vec<(Vec<String>, f64)> = h
            .base_rates
            .iter()
            .map(|(cat, &base)| {
                let z: f64 = PlantedEffect::SUPPORTED
                    .iter()
                    .flat_map(|cue| loadings(cue).iter().filter(|(c, _)| c == cat).map(move |(_, w)| w * latent[cue]))
                    .sum();
                (pools.categories.get(cat).cloned().unwrap_or_default(), base * (h.latent_loading * z).exp())
            })
            .filter(|(w, _)| !w.is_empty())
            .collect();
        let total: f64 = cats.iter().map(|c| c.1).sum();
        if total > 0.9 {
            cats.iter_mut().for_each(|c| c.1 *= 0.9 / total);
        }
        let breadth = (h.vocab_size as f64 * (0.5 * latent["lexical_diversity"]).exp()).round() as usize;
        let mut filler = pools.filler.clone();
        filler.shuffle(rng);
        filler.truncate(breadth.clamp(5, pools.filler.len()));
        let words = LogNormal::new(h.words_median.ln(), h.words_sigma).expect("valid word distribution");
        Style { categories: cats, filler, words }
    }

    fn message(&self, rng: &mut impl Rng) -> String {
        let n = (self.words.sample(rng).round() as usize).clamp(1, MAX_WORDS);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut word = None;
            for (pool, p) in &self.categories {
                acc += p;
                if u < acc {
                    word = Some(pool[rng.random_range(0..pool.len())].as_str());
                    break;
                }
            }
            out.push(word.unwrap_or_else(|| self.filler[rng.random_range(0..self.filler.len())].as_str()));
        }
        out.join(" ")
    }
}

struct Pools {
    categories: HashMap<String, Vec<String>>,
    filler: Vec<String>,
}

impl Pools {
    fn new(dict: &CueDictionary) -> Self {
        let categories = dict
            .categories()
            .iter()
            .map(|c| {
                let words: Vec<String> = dict.words(c).into_iter().filter(|w| dict.matches(w).len() == 1).collect();
                (c.clone(), words)
            })
            .collect();
        let mut filler: Vec<String> =
            FILLER.split_whitespace().filter(|w| dict.is_unmatched(w)).map(String::from).collect();
        filler.sort();
        filler.dedup();
        Pools { categories, filler }
    }
}

fn draw_latent<'a>(planted: &PlantedEffect, is_agent: bool, rng: &mut impl Rng) -> BTreeMap<&'a str, f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    PlantedEffect::SUPPORTED
        .iter()
        .map(|&cue| (cue, normal.sample(rng) + if is_agent { planted.shift(cue) } else { 0.0 }))
        .collect()
}

const IMPRESSIONS: [(IdentityJudgment, &[&str]); 3] = [
    (
        IdentityJudgment::AI,
        &["replied fast and sounded formal", "too perfect, felt like a bot", "generic answers every time"],
    ),
    (IdentityJudgment::Human, &["made typos and joked around", "seemed relaxed and casual", "had real opinions"]),
    (IdentityJudgment::NotSure, &["hard to tell", "did not say much", ""]),
];

/// Simulates one group end to end.
fn simulate_group(
    world: &WorldConfig,
    dict: &CueDictionary,
    pools: &Pools,
    group_id: &str,
    condition: Condition,
    task: TaskDomain,
    epoch_ms: u64,
) -> Result<(SessionState, Vec<crate::model::Event>)> {
    let seed = derive_seed(world.seed, &[group_id]);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["roster"]));
    let mut names = world.pseudonyms.clone();
    names.shuffle(&mut rng);
    let humans = condition.composition.human_count();
    let roster: Vec<Participant> = names
        .iter()
        .take(3)
        .enumerate()
        .map(|(k, name)| {
            if k < humans {
                Participant::human(format!("{group_id}-h{}", k + 1), name.clone())
            } else {
                Participant::agent(format!("{group_id}-a{}", k - humans + 1), name.clone(), condition.stance.unwrap())
            }
        })
        .collect();
    let group = GroupRecord {
        group_id: group_id.to_string(),
        condition,
        task,
        roster: roster.clone(),
        epoch_ms,
        started_ms: None,
        ended_ms: None,
        duration_s: world.duration_s,
        incomplete: false,
    };
    let duration_ms = (world.duration_s * 1000.0).round() as u64;
    let cfg = SessionConfig {
        duration_ms,
        familiarisation_ms: 0,
        timer_interval_ms: (world.timer_interval_s * 1000.0) as u64,
    };
    let mut session = SessionState::new(group, cfg)?;
    session.start(0)?;

    let mut styles = HashMap::new();
    let mut latents = HashMap::new();
    for p in &roster {
        let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["style", &p.pseudonym]));
        let latent = draw_latent(&world.planted, p.role == Role::Agent, &mut r);
        styles.insert(p.pseudonym.clone(), Style::new(world, pools, &latent, &mut r));
        latents.insert(p.pseudonym.clone(), latent);
    }
    let lat = |p: &Participant| (0.3 * latents[&p.pseudonym]["latency_mean_s"]).exp();
    let scheduled = world.agent_timing == AgentTiming::Scheduler;
    let mut sched = world.scheduler.clone();
    if scheduled {
        // The agents' mean latency latent rescales the group's scan interval.
        let agents: Vec<f64> = roster.iter().filter(|p| p.role == Role::Agent).map(|p| lat(p).ln()).collect();
        if !agents.is_empty() {
            sched.base_interval_s *= (agents.iter().sum::<f64>() / agents.len() as f64).exp();
        }
    }
    let mut driver = AgentDriver::new(&session, sched, seed);
    let mut text_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["text"]));
    // (pseudonym, is_agent, gap law, stream, next post time)
    let mut speakers: Vec<(String, bool, LogNormal<f64>, ChaCha8Rng, u64)> = roster
        .iter()
        .filter(|p| !scheduled || p.role == Role::Human)
        .map(|p| {
            let mut r = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["gaps", &p.pseudonym]));
            let d =
                LogNormal::new((world.human.gap_median_s * lat(p)).ln(), world.human.gap_sigma).expect("valid gap law");
            let first = (d.sample(&mut r) * 1000.0) as u64;
            (p.pseudonym.clone(), p.role == Role::Agent, d, r, first)
        })
        .collect();

    let mut t = 0u64;
    while t < duration_ms {
        loop {
            let Some(i) = (0..speakers.len()).min_by_key(|&i| (speakers[i].4, i)) else { break };
            let (who, is_agent, law, r, next) = &mut speakers[i];
            let due = *next;
            if due > t || due >= duration_ms {
                break;
            }
            let text = styles[who.as_str()].message(&mut text_rng);
            if *is_agent {
                driver.deliver(&mut session, who, Ok(text), due);
            } else {
                session.post_message(who, &text, due)?;
                driver.on_message(who);
            }
            *next = due + (law.sample(r) * 1000.0).max(1000.0) as u64;
        }
        session.tick(t);
        if scheduled {
            for p in driver.scheduler.due(t) {
                let text = styles[&p].message(&mut text_rng);
                driver.deliver(&mut session, &p, Ok(text), t);
            }
        }
        t += world.tick_ms;
    }
    session.tick(duration_ms);

    let (_, profiles) =
        extract_profiles(dict, std::slice::from_ref(&session.group), &session.history, &CueConfig::default());
    let by_target: HashMap<&str, &CueProfile> = profiles.iter().map(|p| (p.target.as_str(), p)).collect();
    let mut jrng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["judge"]));
    let raters: Vec<String> = session.humans();
    for (k, rater) in raters.iter().enumerate() {
        let now = duration_ms + 30_000 + 1000 * k as u64;
        if jrng.random::<f64>() >= world.human.eval_rate {
            session.disconnect(rater, now);
            continue;
        }
        let bundles: Vec<EvalBundle> = roster
            .iter()
            .filter(|p| &p.pseudonym != rater)
            .map(|p| {
                let j = judge(&world.human.judge, by_target[p.pseudonym.as_str()], p.truth(), &mut jrng);
                let shift: i32 = match j {
                    IdentityJudgment::Human => 1,
                    IdentityJudgment::AI => -1,
                    IdentityJudgment::NotSure => 0,
                };
                let noisy = |r: &mut ChaCha8Rng, base: i32| (base + r.random_range(-1..=1)).clamp(1, 7) as u8;
                let pool = IMPRESSIONS.iter().find(|(x, _)| *x == j).unwrap().1;
                EvalBundle {
                    target: p.pseudonym.clone(),
                    humanness: noisy(&mut jrng, 4 + shift),
                    trust: noisy(&mut jrng, 4 + shift),
                    supportiveness: noisy(&mut jrng, 4),
                    conflictuality: noisy(&mut jrng, 3),
                    judgment: j,
                    impression: pool[jrng.random_range(0..pool.len())].to_string(),
                }
            })
            .collect();
        session.submit_evaluation(rater, &bundles, now)?;
    }
    if session.phase != crate::engine::Phase::Closed {
        session.expire_evaluation(duration_ms + 120_000);
    }
    let events = session.take_events();
    Ok((session, events))
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: EventLog,
    pub groups: Vec<GroupRecord>,
    pub utterances: Vec<Utterance>,
    /// Judgments with truth joined from the rosters.
    pub judgments: Vec<JudgmentRecord>,
}

impl SimOutput {
    /// Cue profiles of every roster member.
    pub fn profiles(&self, dict: &CueDictionary, cfg: &CueConfig) -> Vec<CueProfile> {
        extract_profiles(dict, &self.groups, &self.utterances, cfg).1
    }

    /// Evaluated targets joined with their profiles.
    pub fn target_rows(&self, dict: &CueDictionary, cfg: &CueConfig) -> Result<Vec<TargetRow>> {
        let evaluated: BTreeSet<(String, String)> =
            self.judgments.iter().map(|j| (j.group_id.clone(), j.target.clone())).collect();
        target_rows(&self.groups, &self.profiles(dict, cfg), Some(&evaluated))
    }
}

/// Draws the condition and task of each group, in group order.
pub fn assignments(world: &WorldConfig) -> Result<Vec<(String, Condition, TaskDomain)>> {
    let cfg = world.engine_view();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(world.seed, &["assign"]));
    let width = world.n_groups.to_string().len().max(4);
    (0..world.n_groups)
        .map(|i| {
            let (c, t) = crate::engine::draw_assignment(&cfg, &mut rng)?;
            Ok((format!("g{:0width$}", i + 1), c, t))
        })
        .collect()
}

/// Simulates a whole experiment; groups run in parallel and merge in id order.
pub fn simulate_experiment(world: &WorldConfig, dict: &CueDictionary) -> Result<SimOutput> {
    world.validate()?;
    let pools = Pools::new(dict);
    let plan = assignments(world)?;
    let step = (world.duration_s * 1000.0) as u64 + 300_000;
    let results: Vec<(SessionState, Vec<crate::model::Event>)> = plan
        .par_iter()
        .enumerate()
        .map(|(i, (gid, c, t))| simulate_group(world, dict, &pools, gid, *c, *t, world.epoch_ms + i as u64 * step))
        .collect::<Result<_>>()?;
    let mut log = EventLog::new();
    for (_, events) in &results {
        log.extend(events.iter().cloned())?;
    }
    let replay = log.replay()?;
    let judgments = join_truth(&replay.judgments, &replay.groups)?;
    Ok(SimOutput { groups: replay.groups, utterances: replay.utterances, judgments, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_and_threshold_judges() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p =
            CueProfile { group_id: "g".into(), target: "Bob".into(), truth: Some(Truth::AI), values: [None; 12] };
        assert_eq!(judge(&JudgePolicy::Oracle, &p, Truth::AI, &mut rng), IdentityJudgment::AI);
        let pol = JudgePolicy::CueThreshold { feature: Feature::Conversationality, cutpoint: 5.0 };
        assert_eq!(judge(&pol, &p, Truth::AI, &mut rng), IdentityJudgment::NotSure);
        p.set(Feature::Conversationality, Some(6.0));
        assert_eq!(judge(&pol, &p, Truth::Human, &mut rng), IdentityJudgment::AI);
        p.set(Feature::Conversationality, Some(5.0));
        assert_eq!(judge(&pol, &p, Truth::AI, &mut rng), IdentityJudgment::Human);
    }

    #[test]
    fn filler_never_matches_the_dictionary() {
        let dict = CueDictionary::demo();
        let pools = Pools::new(&dict);
        assert!(pools.filler.len() > 100);
        for (cat, words) in &pools.categories {
            assert!(!words.is_empty(), "{cat}");
            for w in words {
                assert_eq!(dict.matches(w), vec![cat.as_str()]);
            }
        }
    }

    #[test]
    fn planted_keys_are_checked() {
        let bad = PlantedEffect { shifts: BTreeMap::from([("latency_var_s".into(), 1.0)]) };
        assert!(bad.validate().is_err());
        PlantedEffect::demo().validate().unwrap();
    }

    #[test]
    fn single_all_human_group_has_no_agent_messages() {
        let world = WorldConfig { n_groups: 1, ..Default::default() }.with_conditions(&["H3"]);
        let out = simulate_experiment(&world, &CueDictionary::demo()).unwrap();
        assert!(!out.utterances.is_empty());
        assert!(out.utterances.iter().all(|u| out.groups[0].member(&u.speaker).unwrap().role == Role::Human));
        assert_eq!(out.judgments.len(), 6);
    }
}
