//! Probabilistic participation scheduling for undisclosed agents.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerConfig {
    pub base_interval_s: f64,
    pub jitter_frac: f64,
    pub speak_prob: f64,
    pub collision_delay_s: f64,
    pub max_consecutive: u32,
    pub rng_seed: u64,
    /// Two speak decisions within one tick of this size count as simultaneous.
    pub tick_ms: u64,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        SchedulerConfig {
            base_interval_s: 25.0,
            jitter_frac: 0.25,
            speak_prob: 0.5,
            collision_delay_s: 10.0,
            max_consecutive: 3,
            rng_seed: 0,
            tick_ms: 1000,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.jitter_frac) {
            return Err(Error::Config(format!("jitter_frac {} not in [0, 1)", self.jitter_frac)));
        }
        if !(0.0..=1.0).contains(&self.speak_prob) {
            return Err(Error::Config(format!("speak_prob {} not in [0, 1]", self.speak_prob)));
        }
        if self.max_consecutive < 1 {
            return Err(Error::Config("max_consecutive must be at least 1".into()));
        }
        if !(self.base_interval_s > 0.0) || self.collision_delay_s < 0.0 || self.tick_ms == 0 {
            return Err(Error::Config("scheduler intervals must be positive".into()));
        }
        Ok(())
    }

    pub fn collision_delay_ms(&self) -> u64 {
        (self.collision_delay_s * 1000.0).round() as u64
    }
}

/// Next scan instant: `now + base * u` with `u ~ Uniform[1 - jitter, 1 + jitter]`.
pub fn schedule_next_scan(cfg: &SchedulerConfig, now_ms: u64, rng: &mut impl Rng) -> u64 {
    let base_ms = cfg.base_interval_s * 1000.0;
    let u =
        if cfg.jitter_frac == 0.0 { 1.0 } else { rng.random_range((1.0 - cfg.jitter_frac)..=(1.0 + cfg.jitter_frac)) };
    now_ms + (base_ms * u).round() as u64
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentState {
    pub next_scan_ms: u64,
    /// Own messages since another member last spoke.
    pub consecutive_count: u32,
    /// A collision-delayed reply waiting to post.
    pub pending_delay_ms: Option<u64>,
    pub has_spoken: bool,
    /// A reply is being generated and has not been posted or skipped yet.
    pub in_flight: bool,
}

impl AgentState {
    pub fn new(next_scan_ms: u64) -> Self {
        AgentState { next_scan_ms, consecutive_count: 0, pending_delay_ms: None, has_spoken: false, in_flight: false }
    }
}

/// Speak decision at a scan instant. Forced false once the consecutive cap
/// is reached; otherwise a Bernoulli(speak_prob) draw.
pub fn decide_speak(cfg: &SchedulerConfig, state: &AgentState, rng: &mut impl Rng) -> bool {
    if state.consecutive_count >= cfg.max_consecutive {
        return false;
    }
    rng.random_bool(cfg.speak_prob)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Arbitration {
    pub speaker: String,
    /// Agents whose reply is postponed, with the postponement in ms.
    pub delayed: Vec<(String, u64)>,
}

/// Picks one speaker uniformly among simultaneous candidates; the rest are
/// postponed by the collision delay.
pub fn arbitrate_collision(cfg: &SchedulerConfig, candidates: &[String], rng: &mut impl Rng) -> Arbitration {
    assert!(!candidates.is_empty(), "arbitration needs at least one candidate");
    let winner = if candidates.len() == 1 { 0 } else { rng.random_range(0..candidates.len()) };
    let delay = cfg.collision_delay_ms();
    Arbitration {
        speaker: candidates[winner].clone(),
        delayed: candidates.iter().enumerate().filter(|(i, _)| *i != winner).map(|(_, c)| (c.clone(), delay)).collect(),
    }
}

#[derive(Debug, Clone)]
pub struct ScheduledAgent {
    pub pseudonym: String,
    pub state: AgentState,
    rng: ChaCha8Rng,
}

/// All agents of one group. Drives scans on the engine tick and funnels the
/// resulting speak requests back to the session.
#[derive(Debug, Clone)]
pub struct ParticipationScheduler {
    cfg: SchedulerConfig,
    agents: Vec<ScheduledAgent>,
    arbiter: ChaCha8Rng,
    pub scans: u64,
    pub speak_decisions: u64,
}

impl ParticipationScheduler {
    /// Per-agent streams are seeded from `(seed, group_id, pseudonym)`.
    pub fn new(cfg: SchedulerConfig, group_id: &str, pseudonyms: &[String], seed: u64) -> Self {
        let mut agents: Vec<ScheduledAgent> = pseudonyms
            .iter()
            .map(|p| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[group_id, p]));
                let first = schedule_next_scan(&cfg, 0, &mut rng);
                ScheduledAgent { pseudonym: p.clone(), state: AgentState::new(first), rng }
            })
            .collect();
        agents.sort_by(|a, b| a.pseudonym.cmp(&b.pseudonym));
        let arbiter = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[group_id, "#arbiter"]));
        ParticipationScheduler { cfg, agents, arbiter, scans: 0, speak_decisions: 0 }
    }

    pub fn config(&self) -> &SchedulerConfig {
        &self.cfg
    }

    pub fn agents(&self) -> &[ScheduledAgent] {
        &self.agents
    }

    pub fn agent(&self, pseudonym: &str) -> Option<&ScheduledAgent> {
        self.agents.iter().find(|a| a.pseudonym == pseudonym)
    }

    fn agent_mut(&mut self, pseudonym: &str) -> Option<&mut ScheduledAgent> {
        self.agents.iter_mut().find(|a| a.pseudonym == pseudonym)
    }

    /// Updates consecutive-run counters after any member's message.
    pub fn on_message(&mut self, speaker: &str) {
        for a in &mut self.agents {
            if a.pseudonym == speaker {
                a.state.consecutive_count += 1;
                a.state.has_spoken = true;
                a.state.in_flight = false;
            } else {
                a.state.consecutive_count = 0;
            }
        }
    }

    /// The agent's reply was abandoned (generation failure or cap at post time).
    pub fn on_skip(&mut self, pseudonym: &str) {
        if let Some(a) = self.agent_mut(pseudonym) {
            a.state.in_flight = false;
        }
    }

    /// Whether the agent may post right now without breaking the cap.
    pub fn may_post(&self, pseudonym: &str) -> bool {
        self.agent(pseudonym).map(|a| a.state.consecutive_count < self.cfg.max_consecutive).unwrap_or(false)
    }

    /// Runs every scan due at or before `now_ms` and returns the agents that
    /// should compose a reply now. Scans are rescheduled from their own
    /// instant, so tick rounding does not drift the scan rate.
    pub fn due(&mut self, now_ms: u64) -> Vec<String> {
        let mut fresh = Vec::new();
        let mut ready_delayed = Vec::new();
        let cfg = self.cfg.clone();
        for a in &mut self.agents {
            if let Some(due) = a.state.pending_delay_ms {
                if due <= now_ms {
                    a.state.pending_delay_ms = None;
                    ready_delayed.push(a.pseudonym.clone());
                }
            }
            while a.state.next_scan_ms <= now_ms {
                let scan_at = a.state.next_scan_ms;
                self.scans += 1;
                let busy = a.state.in_flight || a.state.pending_delay_ms.is_some();
                if !busy && !fresh.contains(&a.pseudonym) && decide_speak(&cfg, &a.state, &mut a.rng) {
                    self.speak_decisions += 1;
                    fresh.push(a.pseudonym.clone());
                }
                a.state.next_scan_ms = schedule_next_scan(&cfg, scan_at, &mut a.rng);
            }
        }
        let mut candidates: Vec<String> = ready_delayed;
        for f in fresh {
            if !candidates.contains(&f) {
                candidates.push(f);
            }
        }
        candidates.retain(|p| self.may_post(p));
        if candidates.is_empty() {
            return Vec::new();
        }
        let arb = arbitrate_collision(&cfg, &candidates, &mut self.arbiter);
        for (p, delay) in &arb.delayed {
            if let Some(a) = self.agent_mut(p) {
                a.state.pending_delay_ms = Some(now_ms + delay);
            }
        }
        if let Some(a) = self.agent_mut(&arb.speaker) {
            a.state.in_flight = true;
        }
        vec![arb.speaker]
    }

    /// Earliest instant at which `due` could return something.
    pub fn next_wakeup(&self) -> Option<u64> {
        self.agents.iter().flat_map(|a| std::iter::once(a.state.next_scan_ms).chain(a.state.pending_delay_ms)).min()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn zero_jitter_gives_exact_base_interval() {
        let cfg = SchedulerConfig { jitter_frac: 0.0, ..Default::default() };
        let mut r = rng(1);
        for now in [0, 1234, 600_000] {
            assert_eq!(schedule_next_scan(&cfg, now, &mut r) - now, 25_000);
        }
    }

    #[test]
    fn fixed_seed_gives_identical_gaps() {
        let cfg = SchedulerConfig::default();
        let a: Vec<u64> = {
            let mut r = rng(9);
            (0..50).map(|_| schedule_next_scan(&cfg, 0, &mut r)).collect()
        };
        let b: Vec<u64> = {
            let mut r = rng(9);
            (0..50).map(|_| schedule_next_scan(&cfg, 0, &mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn never_speaks_with_zero_probability() {
        let cfg = SchedulerConfig { speak_prob: 0.0, ..Default::default() };
        let mut r = rng(2);
        let st = AgentState::new(0);
        assert!((0..1000).all(|_| !decide_speak(&cfg, &st, &mut r)));
    }

    #[test]
    fn cap_forces_silence() {
        let cfg = SchedulerConfig { speak_prob: 1.0, ..Default::default() };
        let mut r = rng(3);
        let mut st = AgentState::new(0);
        st.consecutive_count = 3;
        assert!(!decide_speak(&cfg, &st, &mut r));
        st.consecutive_count = 2;
        assert!(decide_speak(&cfg, &st, &mut r));
    }

    #[test]
    fn singleton_candidate_speaks_without_delay() {
        let cfg = SchedulerConfig::default();
        let arb = arbitrate_collision(&cfg, &["A".to_string()], &mut rng(4));
        assert_eq!(arb.speaker, "A");
        assert!(arb.delayed.is_empty());
    }

    #[test]
    fn pair_collision_delays_loser_by_ten_seconds() {
        let cfg = SchedulerConfig::default();
        let cands = vec!["A".to_string(), "B".to_string()];
        let arb = arbitrate_collision(&cfg, &cands, &mut rng(5));
        assert!(cands.contains(&arb.speaker));
        assert_eq!(arb.delayed.len(), 1);
        assert_ne!(arb.delayed[0].0, arb.speaker);
        assert_eq!(arb.delayed[0].1, 10_000);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for cfg in [
            SchedulerConfig { jitter_frac: 1.0, ..Default::default() },
            SchedulerConfig { speak_prob: 1.5, ..Default::default() },
            SchedulerConfig { max_consecutive: 0, ..Default::default() },
        ] {
            assert!(cfg.validate().is_err());
        }
        assert!(SchedulerConfig::default().validate().is_ok());
    }

    #[test]
    fn delayed_reply_posts_exactly_at_collision_delay() {
        let cfg = SchedulerConfig { speak_prob: 1.0, jitter_frac: 0.0, ..Default::default() };
        let names = vec!["Bob".to_string(), "Stuart".to_string()];
        let mut s = ParticipationScheduler::new(cfg, "g1", &names, 1);
        // both scan at 25 s and both want to speak
        assert!(s.due(24_999).is_empty());
        let first = s.due(25_000);
        assert_eq!(first.len(), 1);
        let loser = names.iter().find(|n| **n != first[0]).unwrap().clone();
        assert_eq!(s.agent(&loser).unwrap().state.pending_delay_ms, Some(35_000));
        s.on_message(&first[0]);
        assert!(s.due(34_999).is_empty());
        assert_eq!(s.due(35_000), vec![loser]);
    }
}
