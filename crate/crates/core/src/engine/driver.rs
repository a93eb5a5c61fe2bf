//! Connects a group's undisclosed agents to its session.

use std::collections::HashMap;

use log::warn;

use super::session::{Outbound, Phase, SessionState};
use crate::agent::{
    build_prompt, generate_reply, GenerationParams, GeneratorConfig, ParticipationScheduler, PersonaSpec, Prompt,
    SchedulerConfig, TextGenerator,
};
use crate::model::{Role, TaskDomain};

pub struct AgentDriver {
    pub scheduler: ParticipationScheduler,
    personas: HashMap<String, PersonaSpec>,
    task: TaskDomain,
}

impl AgentDriver {
    pub fn new(session: &SessionState, cfg: SchedulerConfig, seed: u64) -> Self {
        let agents: Vec<_> = session.group.roster.iter().filter(|p| p.role == Role::Agent).collect();
        let names: Vec<String> = agents.iter().map(|p| p.pseudonym.clone()).collect();
        let personas = agents
            .iter()
            .map(|p| (p.pseudonym.clone(), PersonaSpec::builtin(p.stance.expect("agents carry a stance"))))
            .collect();
        AgentDriver {
            scheduler: ParticipationScheduler::new(cfg, &session.group.group_id, &names, seed),
            personas,
            task: session.group.task,
        }
    }

    pub fn has_agents(&self) -> bool {
        !self.personas.is_empty()
    }

    pub fn with_persona(mut self, pseudonym: &str, persona: PersonaSpec) -> Self {
        self.personas.insert(pseudonym.to_string(), persona);
        self
    }

    /// Agents that decided to speak at `now_ms`, with their prompts.
    pub fn due(&mut self, session: &SessionState, now_ms: u64) -> Vec<(String, Prompt)> {
        if session.phase != Phase::Discussion {
            return Vec::new();
        }
        let ts = session.session_ts(now_ms);
        self.scheduler
            .due(ts)
            .into_iter()
            .map(|p| {
                let has_spoken = self.scheduler.agent(&p).map(|a| a.state.has_spoken).unwrap_or(false);
                let prompt = build_prompt(&self.personas[&p], self.task, &session.history, &p, has_spoken);
                (p, prompt)
            })
            .collect()
    }

    pub fn on_message(&mut self, speaker: &str) {
        self.scheduler.on_message(speaker);
    }

    pub fn on_skip(&mut self, pseudonym: &str) {
        self.scheduler.on_skip(pseudonym);
    }

    /// Posts a generated reply if the session and cap still allow it;
    /// otherwise records a skip.
    pub fn deliver(
        &mut self,
        session: &mut SessionState,
        pseudonym: &str,
        reply: Result<String, String>,
        now_ms: u64,
    ) -> Option<Outbound> {
        let text = match reply {
            Ok(t) => t,
            Err(reason) => {
                warn!("agent {pseudonym} skipped a turn: {reason}");
                self.on_skip(pseudonym);
                session.record_skip(pseudonym, &reason, now_ms);
                return None;
            }
        };
        if !self.scheduler.may_post(pseudonym) {
            self.on_skip(pseudonym);
            session.record_skip(pseudonym, "consecutive-message cap", now_ms);
            return None;
        }
        match session.post_message(pseudonym, &text, now_ms) {
            Ok(out) => {
                self.on_message(pseudonym);
                Some(out)
            }
            Err(e) => {
                self.on_skip(pseudonym);
                warn!("agent {pseudonym} reply dropped: {e}");
                None
            }
        }
    }
}

/// Synchronous agent step: generate and post every due reply at `now_ms`.
pub fn run_agent_turns(
    driver: &mut AgentDriver,
    session: &mut SessionState,
    generator: &dyn TextGenerator,
    gen_cfg: &GeneratorConfig,
    now_ms: u64,
) -> Vec<Outbound> {
    let params = GenerationParams::from(gen_cfg);
    let mut out = Vec::new();
    for (p, prompt) in driver.due(session, now_ms) {
        let reply =
            generate_reply(generator, &prompt, &params, gen_cfg.max_words, gen_cfg.attempts).map_err(|e| e.to_string());
        out.extend(driver.deliver(session, &p, reply, now_ms));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::StubGenerator;
    use crate::engine::SessionConfig;
    use crate::model::{GroupRecord, Participant, Stance};

    fn session() -> SessionState {
        let roster = vec![
            Participant::human("p1", "Kevin"),
            Participant::agent("a1", "Stuart", Stance::Contrarian),
            Participant::agent("a2", "Bob", Stance::Contrarian),
        ];
        let g = GroupRecord {
            group_id: "g9".into(),
            condition: "H1_C".parse().unwrap(),
            task: TaskDomain::EthicalDilemma,
            roster,
            epoch_ms: 0,
            started_ms: None,
            ended_ms: None,
            duration_s: 600.0,
            incomplete: false,
        };
        let mut s = SessionState::new(g, SessionConfig { familiarisation_ms: 0, ..Default::default() }).unwrap();
        s.start(0).unwrap();
        s
    }

    #[test]
    fn silent_human_never_sees_an_agent_run_over_the_cap() {
        let mut s = session();
        let mut d = AgentDriver::new(&s, SchedulerConfig { speak_prob: 1.0, ..Default::default() }, 3);
        let gen_cfg = GeneratorConfig::default();
        for now in (0..=600_000).step_by(1000) {
            s.tick(now);
            run_agent_turns(&mut d, &mut s, &StubGenerator, &gen_cfg, now);
        }
        let mut run = 0;
        let mut prev = "";
        for u in &s.history {
            run = if u.speaker == prev { run + 1 } else { 1 };
            prev = &u.speaker;
            assert!(run <= 3);
        }
        assert!(s.history.len() > 10);
        assert_eq!(s.history[0].text, "Hi everyone");
    }
}
