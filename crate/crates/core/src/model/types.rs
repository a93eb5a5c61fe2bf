use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Composition {
    #[serde(rename = "H3")]
    H3,
    #[serde(rename = "H2_AI1")]
    H2Ai1,
    #[serde(rename = "H1_AI2")]
    H1Ai2,
}

impl Composition {
    pub fn agent_count(self) -> usize {
        match self {
            Composition::H3 => 0,
            Composition::H2Ai1 => 1,
            Composition::H1Ai2 => 2,
        }
    }

    pub fn human_count(self) -> usize {
        3 - self.agent_count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Stance {
    Supportive,
    Contrarian,
}

/// Group composition plus the shared agent stance (absent for all-human groups).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub composition: Composition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<Stance>,
}

impl Condition {
    pub fn new(composition: Composition, stance: Option<Stance>) -> Result<Self> {
        match (composition, stance) {
            (Composition::H3, Some(_)) => Err(Error::Config("all-human condition cannot carry a stance".into())),
            (Composition::H2Ai1 | Composition::H1Ai2, None) => {
                Err(Error::Config("conditions with agents need a stance".into()))
            }
            _ => Ok(Condition { composition, stance }),
        }
    }

    pub fn all_human() -> Self {
        Condition { composition: Composition::H3, stance: None }
    }

    /// Short analysis label: `H3`, `H2_S`, `H2_C`, `H1_S`, `H1_C`.
    pub fn label(&self) -> &'static str {
        match (self.composition, self.stance) {
            (Composition::H3, _) => "H3",
            (Composition::H2Ai1, Some(Stance::Supportive)) => "H2_S",
            (Composition::H2Ai1, _) => "H2_C",
            (Composition::H1Ai2, Some(Stance::Supportive)) => "H1_S",
            (Composition::H1Ai2, _) => "H1_C",
        }
    }

    pub fn all() -> [Condition; 5] {
        ["H3", "H2_S", "H2_C", "H1_S", "H1_C"].map(|l| l.parse().unwrap())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Composition::*;
        use Stance::*;
        let (c, st) = match s {
            "H3" => (H3, None),
            "H2_S" => (H2Ai1, Some(Supportive)),
            "H2_C" => (H2Ai1, Some(Contrarian)),
            "H1_S" => (H1Ai2, Some(Supportive)),
            "H1_C" => (H1Ai2, Some(Contrarian)),
            other => return Err(Error::Config(format!("unknown condition label `{other}`"))),
        };
        Condition::new(c, st)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskDomain {
    SurvivalRanking,
    EthicalDilemma,
    CreativeStory,
}

impl TaskDomain {
    pub const ALL: [TaskDomain; 3] =
        [TaskDomain::SurvivalRanking, TaskDomain::EthicalDilemma, TaskDomain::CreativeStory];

    pub fn code(self) -> &'static str {
        match self {
            TaskDomain::SurvivalRanking => "SR",
            TaskDomain::EthicalDilemma => "ED",
            TaskDomain::CreativeStory => "CSW",
        }
    }

    pub fn brief(self) -> &'static str {
        match self {
            TaskDomain::SurvivalRanking => include_str!("../../assets/task_survival.txt"),
            TaskDomain::EthicalDilemma => include_str!("../../assets/task_ethical.txt"),
            TaskDomain::CreativeStory => include_str!("../../assets/task_creative.txt"),
        }
    }
}

impl FromStr for TaskDomain {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "SurvivalRanking" | "SR" | "survival" => Ok(TaskDomain::SurvivalRanking),
            "EthicalDilemma" | "ED" | "ethical" => Ok(TaskDomain::EthicalDilemma),
            "CreativeStory" | "CSW" | "creative" => Ok(TaskDomain::CreativeStory),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

impl fmt::Display for TaskDomain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Role {
    Human,
    Agent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Participant {
    pub id: String,
    pub pseudonym: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stance: Option<Stance>,
}

impl Participant {
    pub fn human(id: impl Into<String>, pseudonym: impl Into<String>) -> Self {
        Participant { id: id.into(), pseudonym: pseudonym.into(), role: Role::Human, stance: None }
    }

    pub fn agent(id: impl Into<String>, pseudonym: impl Into<String>, stance: Stance) -> Self {
        Participant { id: id.into(), pseudonym: pseudonym.into(), role: Role::Agent, stance: Some(stance) }
    }

    pub fn truth(&self) -> Truth {
        match self.role {
            Role::Human => Truth::Human,
            Role::Agent => Truth::AI,
        }
    }
}

/// Whitespace-token count; the one tokenizer used for word counts everywhere.
pub fn word_count(text: &str) -> u32 {
    text.split_whitespace().count() as u32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub group_id: String,
    pub speaker: String,
    /// Milliseconds since the discussion started.
    pub ts_ms: u64,
    pub text: String,
    pub word_count: u32,
    /// Per-message cue rates, filled by cue extraction.
    #[serde(default)]
    pub cue_values: BTreeMap<String, f64>,
    /// Gap to the preceding message in seconds; absent for the first message.
    #[serde(default)]
    pub latency_s: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IdentityJudgment {
    AI,
    Human,
    NotSure,
}

impl IdentityJudgment {
    pub const ALL: [IdentityJudgment; 3] = [IdentityJudgment::AI, IdentityJudgment::Human, IdentityJudgment::NotSure];

    pub fn as_str(self) -> &'static str {
        match self {
            IdentityJudgment::AI => "AI",
            IdentityJudgment::Human => "Human",
            IdentityJudgment::NotSure => "Not sure",
        }
    }
}

impl FromStr for IdentityJudgment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "AI" | "ai" => Ok(IdentityJudgment::AI),
            "Human" | "human" => Ok(IdentityJudgment::Human),
            "Not sure" | "NotSure" | "not_sure" | "Not_sure" => Ok(IdentityJudgment::NotSure),
            other => Err(Error::Data(format!("unknown identity judgment `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Truth {
    AI,
    Human,
}

impl Truth {
    pub fn as_str(self) -> &'static str {
        match self {
            Truth::AI => "AI",
            Truth::Human => "Human",
        }
    }

    pub fn is_ai(self) -> bool {
        self == Truth::AI
    }
}

impl FromStr for Truth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "AI" | "ai" => Ok(Truth::AI),
            "Human" | "human" => Ok(Truth::Human),
            other => Err(Error::Data(format!("unknown truth label `{other}`"))),
        }
    }
}

/// Four 1–7 social ratings of one teammate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratings {
    pub humanness: u8,
    pub trust: u8,
    pub supportiveness: u8,
    pub conflictuality: u8,
}

impl Ratings {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("humanness", self.humanness),
            ("trust", self.trust),
            ("supportiveness", self.supportiveness),
            ("conflictuality", self.conflictuality),
        ] {
            if !(1..=7).contains(&v) {
                return Err(Error::Evaluation(format!("{name} rating {v} outside 1..=7")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JudgmentRecord {
    pub rater_id: String,
    pub group_id: String,
    pub target: String,
    pub ratings: Ratings,
    pub judgment: IdentityJudgment,
    pub impression_text: String,
    pub truth: Option<Truth>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub group_id: String,
    pub condition: Condition,
    pub task: TaskDomain,
    pub roster: Vec<Participant>,
    /// Wall-clock epoch of the group's session clock, stored once.
    pub epoch_ms: u64,
    pub started_ms: Option<u64>,
    pub ended_ms: Option<u64>,
    pub duration_s: f64,
    #[serde(default)]
    pub incomplete: bool,
}

impl GroupRecord {
    pub fn validate(&self) -> Result<()> {
        if self.roster.len() != 3 {
            return Err(Error::Roster(format!(
                "group {} has {} members, expected 3",
                self.group_id,
                self.roster.len()
            )));
        }
        let agents = self.roster.iter().filter(|p| p.role == Role::Agent).count();
        if agents != self.condition.composition.agent_count() {
            return Err(Error::Roster(format!(
                "group {} has {agents} agents but condition {}",
                self.group_id, self.condition
            )));
        }
        let mut names: Vec<&str> = self.roster.iter().map(|p| p.pseudonym.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != 3 {
            return Err(Error::Roster(format!("group {} reuses a pseudonym", self.group_id)));
        }
        Ok(())
    }

    pub fn member(&self, pseudonym: &str) -> Option<&Participant> {
        self.roster.iter().find(|p| p.pseudonym == pseudonym)
    }

    pub fn member_by_id(&self, id: &str) -> Option<&Participant> {
        self.roster.iter().find(|p| p.id == id)
    }

    pub fn humans(&self) -> impl Iterator<Item = &Participant> {
        self.roster.iter().filter(|p| p.role == Role::Human)
    }
}
