use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Stance, TaskDomain, Utterance};

const CONTRARIAN: &str = include_str!("../../assets/persona_contrarian.txt");
const SUPPORTIVE: &str = include_str!("../../assets/persona_supportive.txt");

const PERSONA_OPEN: &str = "[Start of Persona]";
const CHARACTER_OPEN: &str = "[start CHARACTER MAINTENANCE]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonaSpec {
    pub stance: Stance,
    pub system_prompt: String,
    pub max_words: usize,
    /// Number of recent messages rendered into the prompt.
    pub window: usize,
}

impl PersonaSpec {
    pub fn builtin(stance: Stance) -> Self {
        let system_prompt = match stance {
            Stance::Supportive => SUPPORTIVE,
            Stance::Contrarian => CONTRARIAN,
        };
        PersonaSpec { stance, system_prompt: system_prompt.to_string(), max_words: 20, window: 12 }
    }

    pub fn from_file(stance: Stance, path: &Path) -> Result<Self> {
        let spec = PersonaSpec { system_prompt: std::fs::read_to_string(path)?, ..PersonaSpec::builtin(stance) };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        for block in [PERSONA_OPEN, CHARACTER_OPEN] {
            if !self.system_prompt.contains(block) {
                return Err(Error::Config(format!("persona template lacks `{block}` block")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranscriptLine {
    pub pseudonym: String,
    pub text: String,
}

/// The four prompt parts handed to a text generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system_prompt: String,
    pub task_brief: String,
    pub transcript: Vec<TranscriptLine>,
    pub first_interaction: bool,
    pub speaker: String,
}

pub const FIRST_INTERACTION_NOTE: &str =
    "You have not said anything in this chat yet. Just say \"Hi everyone\" or \"Hey\".";

impl Prompt {
    /// System text: persona block, task brief, and (before the agent's first
    /// message) the greeting instruction.
    pub fn system_text(&self) -> String {
        let mut s = String::with_capacity(self.system_prompt.len() + self.task_brief.len() + 256);
        s.push_str(self.system_prompt.trim_end());
        s.push_str("\n\n[start TASK]\n");
        s.push_str(self.task_brief.trim_end());
        s.push_str("\n[end TASK]\n");
        s.push_str(&format!("\nIn this chat your name is {}.\n", self.speaker));
        if self.first_interaction {
            s.push('\n');
            s.push_str(FIRST_INTERACTION_NOTE);
            s.push('\n');
        }
        s
    }

    pub fn transcript_text(&self) -> String {
        if self.transcript.is_empty() {
            return "(no messages yet)\n".to_string();
        }
        self.transcript.iter().map(|l| format!("{}: {}\n", l.pseudonym, l.text)).collect()
    }

    pub fn render(&self) -> String {
        format!("{}\n[start CHAT]\n{}[end CHAT]\n", self.system_text(), self.transcript_text())
    }
}

pub fn build_prompt(
    persona: &PersonaSpec,
    task: TaskDomain,
    history: &[Utterance],
    speaker: &str,
    has_spoken: bool,
) -> Prompt {
    let start = history.len().saturating_sub(persona.window);
    Prompt {
        system_prompt: persona.system_prompt.clone(),
        task_brief: task.brief().to_string(),
        transcript: history[start..]
            .iter()
            .map(|u| TranscriptLine { pseudonym: u.speaker.clone(), text: u.text.clone() })
            .collect(),
        first_interaction: !has_spoken,
        speaker: speaker.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(speaker: &str, text: &str) -> Utterance {
        Utterance {
            group_id: "g".into(),
            speaker: speaker.into(),
            ts_ms: 0,
            text: text.into(),
            word_count: 0,
            cue_values: Default::default(),
            latency_s: None,
        }
    }

    #[test]
    fn supportive_prompt_carries_its_persona_block() {
        let p = build_prompt(&PersonaSpec::builtin(Stance::Supportive), TaskDomain::CreativeStory, &[], "Bob", true);
        let text = p.render();
        assert!(text.contains("Respond warmly and positively"));
        assert!(text.contains(CHARACTER_OPEN));
        assert!(!text.contains("Interrupt consensus"));
    }

    #[test]
    fn contrarian_prompt_carries_its_persona_block() {
        let p =
            build_prompt(&PersonaSpec::builtin(Stance::Contrarian), TaskDomain::SurvivalRanking, &[], "Stuart", true);
        assert!(p.render().contains("Interrupt consensus, assert own view"));
    }

    #[test]
    fn first_interaction_rule_only_before_speaking() {
        let persona = PersonaSpec::builtin(Stance::Contrarian);
        let fresh = build_prompt(&persona, TaskDomain::EthicalDilemma, &[], "Bob", false);
        assert!(fresh.render().contains(FIRST_INTERACTION_NOTE));
        assert!(fresh.render().contains("Just say \"Hi everyone\""));
        let later = build_prompt(&persona, TaskDomain::EthicalDilemma, &[utt("Bob", "hey")], "Bob", true);
        assert!(!later.render().contains(FIRST_INTERACTION_NOTE));
    }

    #[test]
    fn transcript_window_keeps_most_recent_lines_in_order() {
        let persona = PersonaSpec { window: 2, ..PersonaSpec::builtin(Stance::Supportive) };
        let hist = [utt("Kevin", "one"), utt("Stuart", "two"), utt("Kevin", "three")];
        let p = build_prompt(&persona, TaskDomain::CreativeStory, &hist, "Bob", true);
        assert_eq!(p.transcript_text(), "Stuart: two\nKevin: three\n");
    }

    #[test]
    fn prompt_is_deterministic() {
        let persona = PersonaSpec::builtin(Stance::Supportive);
        let hist = [utt("Kevin", "what about the lighter")];
        let a = build_prompt(&persona, TaskDomain::SurvivalRanking, &hist, "Bob", false).render();
        let b = build_prompt(&persona, TaskDomain::SurvivalRanking, &hist, "Bob", false).render();
        assert_eq!(a, b);
    }

    #[test]
    fn templates_missing_blocks_fail_validation() {
        let bad = PersonaSpec { system_prompt: "be nice".into(), ..PersonaSpec::builtin(Stance::Supportive) };
        assert!(bad.validate().is_err());
        assert!(PersonaSpec::builtin(Stance::Contrarian).validate().is_ok());
    }
}
