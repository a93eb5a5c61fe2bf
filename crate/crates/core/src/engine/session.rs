//! Per-group state machine. All mutation of a group goes through one
//! `SessionState`; live and simulated sessions share it.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::config::EngineConfig;
use super::wire::ServerMsg;
use crate::error::{Error, Result};
use crate::model::{
    word_count, Event, EventKind, GroupRecord, IdentityJudgment, JudgmentRecord, Ratings, Role, Utterance,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Waiting,
    Familiarisation,
    Discussion,
    Evaluation,
    Closed,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Waiting => "waiting",
            Phase::Familiarisation => "familiarisation",
            Phase::Discussion => "discussion",
            Phase::Evaluation => "evaluation",
            Phase::Closed => "closed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub duration_ms: u64,
    pub familiarisation_ms: u64,
    pub timer_interval_ms: u64,
}

impl From<&EngineConfig> for SessionConfig {
    fn from(c: &EngineConfig) -> Self {
        SessionConfig {
            duration_ms: (c.duration_s * 1000.0).round() as u64,
            familiarisation_ms: (c.familiarisation_s * 1000.0).round() as u64,
            timer_interval_ms: (c.timer_interval_s * 1000.0).round() as u64,
        }
    }
}

impl Default for SessionConfig {
    fn default() -> Self {
        (&EngineConfig::default()).into()
    }
}

/// One rater's evaluation of one teammate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalBundle {
    pub target: String,
    pub humanness: u8,
    pub trust: u8,
    pub supportiveness: u8,
    pub conflictuality: u8,
    pub judgment: IdentityJudgment,
    #[serde(default)]
    pub impression: String,
}

impl EvalBundle {
    pub fn ratings(&self) -> Ratings {
        Ratings {
            humanness: self.humanness,
            trust: self.trust,
            supportiveness: self.supportiveness,
            conflictuality: self.conflictuality,
        }
    }
}

/// A payload for one human member (`to = Some`) or every connected human.
#[derive(Debug, Clone, PartialEq)]
pub struct Outbound {
    pub to: Option<String>,
    pub msg: ServerMsg,
}

impl Outbound {
    fn all(msg: ServerMsg) -> Self {
        Outbound { to: None, msg }
    }

    fn one(to: &str, msg: ServerMsg) -> Self {
        Outbound { to: Some(to.to_string()), msg }
    }
}

/// Engine time `now_ms` counts from group creation. The discussion clock
/// starts when familiarisation ends; every logged timestamp is on the
/// discussion clock, and pre-discussion events are logged at 0.
#[derive(Debug, Clone)]
pub struct SessionState {
    pub group: GroupRecord,
    pub phase: Phase,
    pub clock_ms: u64,
    pub history: Vec<Utterance>,
    pub judgments: Vec<JudgmentRecord>,
    cfg: SessionConfig,
    origin_ms: u64,
    next_timer_ms: u64,
    submitted: BTreeSet<String>,
    departed: BTreeSet<String>,
    pending: Vec<Event>,
    next_msg_id: u64,
}

impl SessionState {
    pub fn new(group: GroupRecord, cfg: SessionConfig) -> Result<Self> {
        group.validate()?;
        let created = Event::new(
            group.group_id.clone(),
            0,
            EventKind::GroupCreated {
                condition: group.condition,
                task: group.task,
                roster: group.roster.clone(),
                epoch_ms: group.epoch_ms,
                duration_s: cfg.duration_ms as f64 / 1000.0,
            },
        );
        Ok(SessionState {
            group,
            phase: Phase::Waiting,
            clock_ms: 0,
            history: Vec::new(),
            judgments: Vec::new(),
            cfg,
            origin_ms: 0,
            next_timer_ms: 0,
            submitted: BTreeSet::new(),
            departed: BTreeSet::new(),
            pending: vec![created],
            next_msg_id: 1,
        })
    }

    pub fn config(&self) -> &SessionConfig {
        &self.cfg
    }

    /// Events produced since the previous call, in log order.
    pub fn take_events(&mut self) -> Vec<Event> {
        std::mem::take(&mut self.pending)
    }

    fn log(&mut self, kind: EventKind) {
        let ts = self.clock_ms.saturating_sub(self.origin_ms);
        self.log_at(ts, kind);
    }

    fn log_at(&mut self, ts: u64, kind: EventKind) {
        self.pending.push(Event::new(self.group.group_id.clone(), ts, kind));
    }

    /// Discussion-clock time of `now_ms`.
    pub fn session_ts(&self, now_ms: u64) -> u64 {
        now_ms.saturating_sub(self.origin_ms)
    }

    pub fn humans(&self) -> Vec<String> {
        self.group.humans().map(|p| p.pseudonym.clone()).collect()
    }

    fn present_humans(&self) -> Vec<String> {
        self.humans().into_iter().filter(|h| !self.departed.contains(h)).collect()
    }

    /// Members have joined: welcomes each human and starts familiarisation.
    pub fn start(&mut self, now_ms: u64) -> Result<Vec<Outbound>> {
        if self.phase != Phase::Waiting {
            return Err(Error::Phase(format!("cannot start a session in phase {}", self.phase.name())));
        }
        self.clock_ms = now_ms;
        self.origin_ms = now_ms + self.cfg.familiarisation_ms;
        let names: Vec<String> = self.group.roster.iter().map(|p| p.pseudonym.clone()).collect();
        for n in &names {
            self.log_at(0, EventKind::Joined { pseudonym: n.clone() });
        }
        self.phase = Phase::Familiarisation;
        let mut out = Vec::new();
        for h in self.humans() {
            out.push(Outbound::one(
                &h,
                ServerMsg::Matched {
                    group_id: self.group.group_id.clone(),
                    pseudonym: h.clone(),
                    teammates: names.iter().filter(|n| **n != h).cloned().collect(),
                },
            ));
            out.push(Outbound::one(
                &h,
                ServerMsg::TaskBrief {
                    text: self.group.task.brief().to_string(),
                    familiarisation_ms: self.cfg.familiarisation_ms,
                    duration_ms: self.cfg.duration_ms,
                },
            ));
        }
        out.extend(self.tick(now_ms));
        Ok(out)
    }

    /// Advances the clock and performs due phase transitions. Idempotent for
    /// repeated or stale instants.
    pub fn tick(&mut self, now_ms: u64) -> Vec<Outbound> {
        let mut out = Vec::new();
        if matches!(self.phase, Phase::Waiting | Phase::Closed) {
            return out;
        }
        self.clock_ms = self.clock_ms.max(now_ms);
        let now = self.clock_ms;
        if self.phase == Phase::Familiarisation && now >= self.origin_ms {
            self.phase = Phase::Discussion;
            self.group.started_ms = Some(0);
            self.log_at(0, EventKind::DiscussionStart);
            out.push(Outbound::all(ServerMsg::Timer {
                phase: "discussion".into(),
                remaining_ms: self.cfg.duration_ms,
            }));
            self.next_timer_ms = self.origin_ms + self.cfg.timer_interval_ms;
        }
        if self.phase == Phase::Discussion {
            let end = self.origin_ms + self.cfg.duration_ms;
            while self.next_timer_ms <= now && self.next_timer_ms < end {
                let ts = self.next_timer_ms - self.origin_ms;
                let remaining_ms = self.cfg.duration_ms - ts;
                self.log_at(ts, EventKind::TimerTick { remaining_ms });
                out.push(Outbound::all(ServerMsg::Timer { phase: "discussion".into(), remaining_ms }));
                self.next_timer_ms += self.cfg.timer_interval_ms;
            }
            if now >= end {
                self.phase = Phase::Evaluation;
                self.group.ended_ms = Some(self.cfg.duration_ms);
                self.log_at(self.cfg.duration_ms, EventKind::SessionEnd);
                out.push(Outbound::all(ServerMsg::SessionEnd));
                for h in self.present_humans() {
                    let targets =
                        self.group.roster.iter().filter(|p| p.pseudonym != h).map(|p| p.pseudonym.clone()).collect();
                    out.push(Outbound::one(&h, ServerMsg::EvalOpen { targets }));
                }
                self.maybe_close();
            }
        }
        out
    }

    /// Appends a chat message on the session clock and returns its broadcast.
    pub fn post_message(&mut self, speaker: &str, text: &str, now_ms: u64) -> Result<Outbound> {
        self.tick(now_ms);
        if self.phase != Phase::Discussion {
            return Err(Error::Phase(format!("messages are not accepted during {}", self.phase.name())));
        }
        if self.group.member(speaker).is_none() {
            return Err(Error::Roster(format!("{speaker} is not a member of this group")));
        }
        if self.departed.contains(speaker) {
            return Err(Error::Roster(format!("{speaker} has left the session")));
        }
        let text = text.trim();
        if text.is_empty() {
            return Err(Error::Data("empty message".into()));
        }
        let ts_ms = self.session_ts(self.clock_ms);
        let latency_s = self.history.last().map(|u| (ts_ms - u.ts_ms) as f64 / 1000.0);
        let wc = word_count(text);
        self.history.push(Utterance {
            group_id: self.group.group_id.clone(),
            speaker: speaker.to_string(),
            ts_ms,
            text: text.to_string(),
            word_count: wc,
            cue_values: Default::default(),
            latency_s,
        });
        self.log_at(ts_ms, EventKind::Message { speaker: speaker.to_string(), text: text.to_string(), word_count: wc });
        let id = self.next_msg_id;
        self.next_msg_id += 1;
        Ok(Outbound::all(ServerMsg::Chat { id, pseudonym: speaker.to_string(), text: text.to_string(), ts_ms }))
    }

    /// Records an agent's abandoned reply.
    pub fn record_skip(&mut self, pseudonym: &str, reason: &str, now_ms: u64) {
        self.tick(now_ms);
        if !matches!(self.phase, Phase::Closed) {
            self.log(EventKind::AgentSkip { pseudonym: pseudonym.to_string(), reason: reason.to_string() });
        }
    }

    /// Accepts one rater's complete bundle set (one per teammate).
    pub fn submit_evaluation(&mut self, rater: &str, bundles: &[EvalBundle], now_ms: u64) -> Result<Vec<Outbound>> {
        let mut out = self.tick(now_ms);
        if self.phase != Phase::Evaluation {
            return Err(Error::Phase(format!("evaluations are not accepted during {}", self.phase.name())));
        }
        let member = self
            .group
            .member(rater)
            .cloned()
            .ok_or_else(|| Error::Roster(format!("{rater} is not a member of this group")))?;
        if member.role != Role::Human {
            return Err(Error::Evaluation(format!("{rater} does not submit evaluations")));
        }
        if self.submitted.contains(rater) {
            return Err(Error::Evaluation(format!("{rater} has already submitted")));
        }
        let expected: BTreeSet<&str> =
            self.group.roster.iter().filter(|p| p.pseudonym != rater).map(|p| p.pseudonym.as_str()).collect();
        let given: Vec<&str> = bundles.iter().map(|b| b.target.as_str()).collect();
        let given_set: BTreeSet<&str> = given.iter().copied().collect();
        if given_set.len() != given.len() {
            return Err(Error::Evaluation("a teammate was evaluated twice".into()));
        }
        if given_set != expected {
            let missing: Vec<&str> = expected.difference(&given_set).copied().collect();
            let extra: Vec<&str> = given_set.difference(&expected).copied().collect();
            return Err(Error::Evaluation(format!("incomplete evaluation: missing {missing:?}, unexpected {extra:?}")));
        }
        for b in bundles {
            b.ratings().validate()?;
        }
        for b in bundles {
            self.judgments.push(JudgmentRecord {
                rater_id: member.id.clone(),
                group_id: self.group.group_id.clone(),
                target: b.target.clone(),
                ratings: b.ratings(),
                judgment: b.judgment,
                impression_text: b.impression.clone(),
                truth: None,
            });
            self.log(EventKind::Evaluation {
                rater_id: member.id.clone(),
                target: b.target.clone(),
                ratings: b.ratings(),
                judgment: b.judgment,
                impression_text: b.impression.clone(),
            });
        }
        self.submitted.insert(rater.to_string());
        out.push(Outbound::one(rater, ServerMsg::EvalAck { accepted: bundles.len() }));
        self.maybe_close();
        Ok(out)
    }

    /// A member left. The rest continue; the group is flagged incomplete.
    pub fn disconnect(&mut self, pseudonym: &str, now_ms: u64) -> Vec<Outbound> {
        let out = self.tick(now_ms);
        if self.phase == Phase::Closed
            || self.group.member(pseudonym).is_none()
            || !self.departed.insert(pseudonym.to_string())
        {
            return out;
        }
        if !self.submitted.contains(pseudonym) || self.phase != Phase::Evaluation {
            self.group.incomplete = true;
            self.log(EventKind::Disconnected { pseudonym: pseudonym.to_string() });
        }
        self.maybe_close();
        out
    }

    /// Ends the evaluation window: closes whatever has been submitted.
    pub fn expire_evaluation(&mut self, now_ms: u64) {
        self.tick(now_ms);
        if self.phase == Phase::Evaluation {
            for h in self.present_humans() {
                if !self.submitted.contains(&h) {
                    self.departed.insert(h.clone());
                    self.group.incomplete = true;
                    self.log(EventKind::Disconnected { pseudonym: h });
                }
            }
            self.maybe_close();
        }
    }

    fn maybe_close(&mut self) {
        if self.phase == Phase::Evaluation && self.present_humans().iter().all(|h| self.submitted.contains(h)) {
            self.phase = Phase::Closed;
            self.log(EventKind::SessionClosed);
        }
        if matches!(self.phase, Phase::Familiarisation | Phase::Discussion) && self.present_humans().is_empty() {
            self.phase = Phase::Closed;
            self.group.incomplete = true;
            self.log(EventKind::SessionClosed);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Condition, EventLog, Participant, Stance, TaskDomain};

    fn group(cond: &str) -> GroupRecord {
        let condition: Condition = cond.parse().unwrap();
        let mut roster = vec![Participant::human("p1", "Kevin")];
        let agents = condition.composition.agent_count();
        if agents < 2 {
            roster.push(Participant::human("p2", "Stuart"));
        } else {
            roster.push(Participant::agent("a2", "Stuart", Stance::Supportive));
        }
        if agents == 0 {
            roster.push(Participant::human("p3", "Bob"));
        } else {
            roster.push(Participant::agent("a1", "Bob", condition.stance.unwrap()));
        }
        GroupRecord {
            group_id: "g1".into(),
            condition,
            task: TaskDomain::SurvivalRanking,
            roster,
            epoch_ms: 0,
            started_ms: None,
            ended_ms: None,
            duration_s: 600.0,
            incomplete: false,
        }
    }

    fn cfg() -> SessionConfig {
        SessionConfig { duration_ms: 600_000, familiarisation_ms: 0, timer_interval_ms: 30_000 }
    }

    fn bundle(target: &str, v: u8) -> EvalBundle {
        EvalBundle {
            target: target.into(),
            humanness: v,
            trust: 4,
            supportiveness: 4,
            conflictuality: 4,
            judgment: IdentityJudgment::Human,
            impression: "fine".into(),
        }
    }

    fn discussing(cond: &str) -> SessionState {
        let mut s = SessionState::new(group(cond), cfg()).unwrap();
        s.start(0).unwrap();
        assert_eq!(s.phase, Phase::Discussion);
        s
    }

    #[test]
    fn first_message_has_no_latency_and_next_has_the_gap() {
        let mut s = discussing("H3");
        s.post_message("Kevin", "hello", 1_000).unwrap();
        s.post_message("Bob", "hi there", 8_000).unwrap();
        assert_eq!(s.history[0].latency_s, None);
        assert_eq!(s.history[1].latency_s, Some(7.0));
        assert_eq!(s.history[1].word_count, 2);
    }

    #[test]
    fn empty_messages_wrong_phase_and_strangers_are_rejected() {
        let mut s = discussing("H3");
        assert!(matches!(s.post_message("Kevin", "   ", 10), Err(Error::Data(_))));
        assert!(matches!(s.post_message("Mallory", "hey", 10), Err(Error::Roster(_))));
        let mut w = SessionState::new(group("H3"), SessionConfig { familiarisation_ms: 5_000, ..cfg() }).unwrap();
        assert!(matches!(w.post_message("Kevin", "hey", 0), Err(Error::Phase(_))));
        w.start(0).unwrap();
        assert!(matches!(w.post_message("Kevin", "hey", 100), Err(Error::Phase(_))));
        assert!(w.post_message("Kevin", "hey", 5_000).is_ok());
    }

    #[test]
    fn session_end_fires_exactly_once_at_the_boundary() {
        let mut s = discussing("H3");
        let ends = |o: &[Outbound]| o.iter().filter(|m| m.msg == ServerMsg::SessionEnd).count();
        assert_eq!(ends(&s.tick(599_999)), 0);
        assert_eq!(s.phase, Phase::Discussion);
        assert_eq!(ends(&s.tick(600_000)), 1);
        assert_eq!(ends(&s.tick(600_000)), 0);
        assert_eq!(ends(&s.tick(700_000)), 0);
        assert_eq!(s.phase, Phase::Evaluation);
        let logged = s.take_events().iter().filter(|e| e.kind == EventKind::SessionEnd).count();
        assert_eq!(logged, 1);
    }

    #[test]
    fn messages_after_expiry_are_refused() {
        let mut s = discussing("H3");
        s.post_message("Kevin", "last call", 599_999).unwrap();
        assert!(matches!(s.post_message("Kevin", "too late", 600_000), Err(Error::Phase(_))));
        assert!(s.history.iter().all(|u| u.ts_ms < 600_000));
    }

    #[test]
    fn mixed_group_closes_once_both_humans_have_rated() {
        let mut s = discussing("H2_C");
        s.tick(600_000);
        s.submit_evaluation("Kevin", &[bundle("Stuart", 5), bundle("Bob", 2)], 601_000).unwrap();
        assert_eq!(s.phase, Phase::Evaluation);
        assert!(matches!(
            s.submit_evaluation("Kevin", &[bundle("Stuart", 5), bundle("Bob", 2)], 602_000),
            Err(Error::Evaluation(_))
        ));
        assert!(matches!(
            s.submit_evaluation("Bob", &[bundle("Kevin", 5), bundle("Stuart", 2)], 602_000),
            Err(Error::Evaluation(_))
        ));
        s.submit_evaluation("Stuart", &[bundle("Kevin", 5), bundle("Bob", 2)], 603_000).unwrap();
        assert_eq!(s.phase, Phase::Closed);
        assert_eq!(s.judgments.len(), 4);
        let s2 = s.tick(900_000);
        assert!(s2.is_empty());
    }

    #[test]
    fn incomplete_or_out_of_range_bundles_are_rejected() {
        let mut s = discussing("H3");
        s.tick(600_000);
        assert!(s.submit_evaluation("Kevin", &[bundle("Stuart", 5)], 600_001).is_err());
        assert!(s.submit_evaluation("Kevin", &[bundle("Stuart", 5), bundle("Kevin", 5)], 600_001).is_err());
        assert!(matches!(
            s.submit_evaluation("Kevin", &[bundle("Stuart", 8), bundle("Bob", 5)], 600_001),
            Err(Error::Evaluation(_))
        ));
        assert!(s.judgments.is_empty());
    }

    #[test]
    fn disconnect_flags_incomplete_and_others_continue() {
        let mut s = discussing("H3");
        s.disconnect("Bob", 10_000);
        assert!(s.group.incomplete);
        s.post_message("Kevin", "still here", 11_000).unwrap();
        assert!(s.post_message("Bob", "back", 12_000).is_err());
        s.tick(600_000);
        s.submit_evaluation("Kevin", &[bundle("Stuart", 5), bundle("Bob", 2)], 601_000).unwrap();
        s.submit_evaluation("Stuart", &[bundle("Kevin", 5), bundle("Bob", 2)], 601_000).unwrap();
        assert_eq!(s.phase, Phase::Closed);
    }

    #[test]
    fn log_replays_to_the_same_records() {
        let mut s = discussing("H2_S");
        s.post_message("Kevin", "hi", 500).unwrap();
        s.post_message("Bob", "Hi everyone", 40_000).unwrap();
        s.tick(600_000);
        s.submit_evaluation("Kevin", &[bundle("Stuart", 5), bundle("Bob", 2)], 601_000).unwrap();
        s.submit_evaluation("Stuart", &[bundle("Kevin", 5), bundle("Bob", 2)], 601_000).unwrap();
        let mut log = EventLog::new();
        log.extend(s.take_events()).unwrap();
        let r = log.replay().unwrap();
        assert_eq!(r.utterances, s.history);
        assert_eq!(r.judgments, s.judgments);
        assert_eq!(r.groups[0].ended_ms, Some(600_000));
    }
}
