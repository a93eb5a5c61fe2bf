use std::collections::VecDeque;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Condition, GroupRecord, Participant, TaskDomain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waiting {
    pub participant_id: String,
    /// Task restriction, if the participant was recruited for one task.
    pub task: Option<TaskDomain>,
    pub enqueued_ms: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WaitStats {
    pub matched: usize,
    pub mean_wait_s: f64,
    pub max_wait_s: f64,
    pub failed_attempts: usize,
}

/// FIFO pool of waiting humans. Unmatched participants stay queued
/// indefinitely; waits of matched participants are tracked.
#[derive(Debug, Clone, Default)]
pub struct MatchPool {
    waiting: VecDeque<Waiting>,
    waits_ms: Vec<u64>,
    failed_attempts: usize,
}

impl MatchPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn join(&mut self, participant_id: &str, task: Option<TaskDomain>, now_ms: u64) -> Result<()> {
        if self.contains(participant_id) {
            return Err(Error::Roster(format!("participant {participant_id} is already waiting")));
        }
        self.waiting.push_back(Waiting { participant_id: participant_id.to_string(), task, enqueued_ms: now_ms });
        Ok(())
    }

    pub fn leave(&mut self, participant_id: &str) -> bool {
        let before = self.waiting.len();
        self.waiting.retain(|w| w.participant_id != participant_id);
        before != self.waiting.len()
    }

    pub fn contains(&self, participant_id: &str) -> bool {
        self.waiting.iter().any(|w| w.participant_id == participant_id)
    }

    pub fn len(&self) -> usize {
        self.waiting.len()
    }

    pub fn is_empty(&self) -> bool {
        self.waiting.is_empty()
    }

    pub fn waiting(&self) -> impl Iterator<Item = &Waiting> {
        self.waiting.iter()
    }

    /// Takes the longest-waiting eligible humans for `condition` and builds
    /// the group roster; pseudonyms are a random draw from `pseudonyms`.
    #[allow(clippy::too_many_arguments)]
    pub fn try_match(
        &mut self,
        condition: Condition,
        task: TaskDomain,
        group_id: &str,
        pseudonyms: &[String],
        now_ms: u64,
        duration_s: f64,
        rng: &mut impl Rng,
    ) -> Option<GroupRecord> {
        let need = condition.composition.human_count();
        let picked: Vec<usize> = self
            .waiting
            .iter()
            .enumerate()
            .filter(|(_, w)| w.task.is_none_or(|t| t == task))
            .map(|(i, _)| i)
            .take(need)
            .collect();
        if picked.len() < need || pseudonyms.len() < 3 {
            self.failed_attempts += 1;
            return None;
        }
        let mut names = pseudonyms.to_vec();
        names.shuffle(rng);
        let mut humans: Vec<Waiting> = picked.iter().rev().map(|&i| self.waiting.remove(i).unwrap()).collect();
        humans.reverse();
        let mut roster = Vec::with_capacity(3);
        for (w, name) in humans.iter().zip(&names) {
            self.waits_ms.push(now_ms.saturating_sub(w.enqueued_ms));
            roster.push(Participant::human(w.participant_id.clone(), name.clone()));
        }
        for (k, name) in names.iter().enumerate().skip(need).take(condition.composition.agent_count()) {
            roster.push(Participant::agent(
                format!("{group_id}-a{}", k - need + 1),
                name.clone(),
                condition.stance.expect("agent conditions carry a stance"),
            ));
        }
        Some(GroupRecord {
            group_id: group_id.to_string(),
            condition,
            task,
            roster,
            epoch_ms: now_ms,
            started_ms: None,
            ended_ms: None,
            duration_s,
            incomplete: false,
        })
    }

    pub fn wait_stats(&self) -> WaitStats {
        let n = self.waits_ms.len();
        WaitStats {
            matched: n,
            mean_wait_s: if n == 0 { 0.0 } else { self.waits_ms.iter().sum::<u64>() as f64 / n as f64 / 1000.0 },
            max_wait_s: self.waits_ms.iter().copied().max().unwrap_or(0) as f64 / 1000.0,
            failed_attempts: self.failed_attempts,
        }
    }
}
