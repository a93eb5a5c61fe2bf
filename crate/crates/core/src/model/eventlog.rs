//! Append-only, newline-delimited JSON event log and its replay.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use super::types::*;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub group_id: String,
    pub ts_ms: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EventKind {
    GroupCreated {
        condition: Condition,
        task: TaskDomain,
        roster: Vec<Participant>,
        epoch_ms: u64,
        duration_s: f64,
    },
    Joined {
        pseudonym: String,
    },
    DiscussionStart,
    Message {
        speaker: String,
        text: String,
        word_count: u32,
    },
    TimerTick {
        remaining_ms: u64,
    },
    SessionEnd,
    Evaluation {
        rater_id: String,
        target: String,
        ratings: Ratings,
        judgment: IdentityJudgment,
        impression_text: String,
    },
    Disconnected {
        pseudonym: String,
    },
    AgentSkip {
        pseudonym: String,
        reason: String,
    },
    SessionClosed,
}

impl Event {
    pub fn new(group_id: impl Into<String>, ts_ms: u64, kind: EventKind) -> Self {
        Event { group_id: group_id.into(), ts_ms, kind }
    }
}

/// In-memory log with per-group timestamp monotonicity.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventLog {
    events: Vec<Event>,
    last_ts: HashMap<String, u64>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, event: Event) -> Result<()> {
        if let Some(&last) = self.last_ts.get(&event.group_id) {
            if event.ts_ms < last {
                return Err(Error::NonMonotonic { group: event.group_id, ts_ms: event.ts_ms, last_ms: last });
            }
        }
        self.last_ts.insert(event.group_id.clone(), event.ts_ms);
        self.events.push(event);
        Ok(())
    }

    pub fn extend(&mut self, events: impl IntoIterator<Item = Event>) -> Result<()> {
        for e in events {
            self.append(e)?;
        }
        Ok(())
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn write_ndjson<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.events {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_ndjson(&self) -> String {
        let mut buf = Vec::new();
        self.write_ndjson(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_ndjson<R: Read>(r: R) -> Result<Self> {
        let mut log = EventLog::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let event: Event =
                serde_json::from_str(&line).map_err(|e| Error::Data(format!("event log line {}: {e}", i + 1)))?;
            log.append(event)?;
        }
        Ok(log)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_ndjson(File::open(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_ndjson(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn replay(&self) -> Result<Replay> {
        replay(&self.events)
    }
}

/// Durable single-writer appender: each event is written and flushed as one line.
pub struct EventLogWriter {
    file: BufWriter<File>,
    log: EventLog,
}

impl EventLogWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(EventLogWriter { file: BufWriter::new(file), log: EventLog::new() })
    }

    pub fn append(&mut self, event: Event) -> Result<()> {
        self.log.append(event.clone())?;
        serde_json::to_writer(&mut self.file, &event)?;
        self.file.write_all(b"\n")?;
        self.file.flush()?;
        Ok(())
    }

    pub fn log(&self) -> &EventLog {
        &self.log
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub events: usize,
    pub messages: usize,
    pub word_count_mismatches: usize,
    pub self_judgments_dropped: usize,
    pub agent_skips: usize,
    pub incomplete_groups: usize,
}

/// Records reconstructed from a log.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Replay {
    pub groups: Vec<GroupRecord>,
    pub utterances: Vec<Utterance>,
    pub judgments: Vec<JudgmentRecord>,
    pub report: IngestReport,
}

impl Replay {
    /// Drops incomplete groups and every record that belongs to them.
    pub fn complete_only(mut self) -> Replay {
        let keep: std::collections::HashSet<String> =
            self.groups.iter().filter(|g| !g.incomplete).map(|g| g.group_id.clone()).collect();
        self.groups.retain(|g| keep.contains(&g.group_id));
        self.utterances.retain(|u| keep.contains(&u.group_id));
        self.judgments.retain(|j| keep.contains(&j.group_id));
        self
    }

    pub fn group(&self, id: &str) -> Option<&GroupRecord> {
        self.groups.iter().find(|g| g.group_id == id)
    }
}

fn replay(events: &[Event]) -> Result<Replay> {
    let mut out = Replay::default();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut last_msg: HashMap<String, u64> = HashMap::new();
    for e in events {
        out.report.events += 1;
        if let EventKind::GroupCreated { condition, task, roster, epoch_ms, duration_s } = &e.kind {
            if index.contains_key(&e.group_id) {
                return Err(Error::Data(format!("group {} created twice", e.group_id)));
            }
            let g = GroupRecord {
                group_id: e.group_id.clone(),
                condition: *condition,
                task: *task,
                roster: roster.clone(),
                epoch_ms: *epoch_ms,
                started_ms: None,
                ended_ms: None,
                duration_s: *duration_s,
                incomplete: false,
            };
            g.validate()?;
            index.insert(e.group_id.clone(), out.groups.len());
            out.groups.push(g);
            continue;
        }
        let gi =
            *index.get(&e.group_id).ok_or_else(|| Error::Data(format!("event for unknown group {}", e.group_id)))?;
        match &e.kind {
            EventKind::GroupCreated { .. } => unreachable!(),
            EventKind::Joined { .. } | EventKind::TimerTick { .. } | EventKind::SessionClosed => {}
            EventKind::DiscussionStart => out.groups[gi].started_ms = Some(e.ts_ms),
            EventKind::Message { speaker, text, word_count: given } => {
                if out.groups[gi].member(speaker).is_none() {
                    return Err(Error::Roster(format!("message from {speaker}, not in group {}", e.group_id)));
                }
                let wc = word_count(text);
                if wc != *given {
                    out.report.word_count_mismatches += 1;
                    warn!("group {} ts {}: word count {given} replaced by recomputed {wc}", e.group_id, e.ts_ms);
                }
                let latency_s = last_msg.get(&e.group_id).map(|&prev| (e.ts_ms - prev) as f64 / 1000.0);
                last_msg.insert(e.group_id.clone(), e.ts_ms);
                out.report.messages += 1;
                out.utterances.push(Utterance {
                    group_id: e.group_id.clone(),
                    speaker: speaker.clone(),
                    ts_ms: e.ts_ms,
                    text: text.clone(),
                    word_count: wc,
                    cue_values: Default::default(),
                    latency_s,
                });
            }
            EventKind::SessionEnd => out.groups[gi].ended_ms = Some(e.ts_ms),
            EventKind::Evaluation { rater_id, target, ratings, judgment, impression_text } => {
                let g = &out.groups[gi];
                let rater = g.member_by_id(rater_id);
                if rater.map(|r| r.pseudonym == *target).unwrap_or(false) {
                    out.report.self_judgments_dropped += 1;
                    continue;
                }
                out.judgments.push(JudgmentRecord {
                    rater_id: rater_id.clone(),
                    group_id: e.group_id.clone(),
                    target: target.clone(),
                    ratings: *ratings,
                    judgment: *judgment,
                    impression_text: impression_text.clone(),
                    truth: None,
                });
            }
            EventKind::Disconnected { .. } => {
                if !out.groups[gi].incomplete {
                    out.groups[gi].incomplete = true;
                    out.report.incomplete_groups += 1;
                }
            }
            EventKind::AgentSkip { .. } => out.report.agent_skips += 1,
        }
    }
    Ok(out)
}

/// Fills `truth` from each target's roster role.
pub fn join_truth(judgments: &[JudgmentRecord], groups: &[GroupRecord]) -> Result<Vec<JudgmentRecord>> {
    let by_id: HashMap<&str, &GroupRecord> = groups.iter().map(|g| (g.group_id.as_str(), g)).collect();
    let mut unresolved = Vec::new();
    let mut out = Vec::with_capacity(judgments.len());
    for j in judgments {
        match by_id.get(j.group_id.as_str()).and_then(|g| g.member(&j.target)) {
            Some(p) => {
                let mut j = j.clone();
                j.truth = Some(p.truth());
                out.push(j);
            }
            None => unresolved.push(format!("{}/{}", j.group_id, j.target)),
        }
    }
    if !unresolved.is_empty() {
        unresolved.sort();
        unresolved.dedup();
        return Err(Error::UnresolvedTargets(unresolved));
    }
    Ok(out)
}

/// Drops judgments where the rater rates themself (foreign data); returns the
/// kept records and the number dropped.
pub fn drop_self_judgments(judgments: Vec<JudgmentRecord>, groups: &[GroupRecord]) -> (Vec<JudgmentRecord>, usize) {
    let by_id: HashMap<&str, &GroupRecord> = groups.iter().map(|g| (g.group_id.as_str(), g)).collect();
    let before = judgments.len();
    let kept: Vec<JudgmentRecord> = judgments
        .into_iter()
        .filter(|j| {
            let own = by_id
                .get(j.group_id.as_str())
                .and_then(|g| g.member_by_id(&j.rater_id))
                .map(|p| p.pseudonym == j.target);
            own != Some(true) && j.rater_id != j.target
        })
        .collect();
    let dropped = before - kept.len();
    (kept, dropped)
}
