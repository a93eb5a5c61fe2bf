//! CSV export/import of the flat tables.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::types::*;
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct JudgmentRow {
    rater_id: String,
    group_id: String,
    target: String,
    humanness: u8,
    trust: u8,
    supportiveness: u8,
    conflictuality: u8,
    judgment: String,
    truth: String,
    impression_text: String,
}

pub fn write_judgments<W: Write>(w: W, judgments: &[JudgmentRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for j in judgments {
        wtr.serialize(JudgmentRow {
            rater_id: j.rater_id.clone(),
            group_id: j.group_id.clone(),
            target: j.target.clone(),
            humanness: j.ratings.humanness,
            trust: j.ratings.trust,
            supportiveness: j.ratings.supportiveness,
            conflictuality: j.ratings.conflictuality,
            judgment: j.judgment.as_str().to_string(),
            truth: j.truth.map(|t| t.as_str().to_string()).unwrap_or_default(),
            impression_text: j.impression_text.clone(),
        })?;
    }
    if judgments.is_empty() {
        wtr.write_record([
            "rater_id",
            "group_id",
            "target",
            "humanness",
            "trust",
            "supportiveness",
            "conflictuality",
            "judgment",
            "truth",
            "impression_text",
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_judgments<R: Read>(r: R) -> Result<Vec<JudgmentRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize::<JudgmentRow>().enumerate() {
        let row = row?;
        let ratings = Ratings {
            humanness: row.humanness,
            trust: row.trust,
            supportiveness: row.supportiveness,
            conflictuality: row.conflictuality,
        };
        ratings.validate().map_err(|e| Error::Data(format!("judgment row {}: {e}", i + 1)))?;
        let truth = if row.truth.trim().is_empty() { None } else { Some(row.truth.parse()?) };
        out.push(JudgmentRecord {
            rater_id: row.rater_id,
            group_id: row.group_id,
            target: row.target,
            ratings,
            judgment: row.judgment.parse()?,
            impression_text: row.impression_text,
            truth,
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct GroupRow {
    group_id: String,
    condition: String,
    task: String,
    duration_s: f64,
    incomplete: bool,
    #[serde(default)]
    epoch_ms: u64,
    #[serde(default)]
    started_ms: Option<u64>,
    #[serde(default)]
    ended_ms: Option<u64>,
}

pub fn write_groups<W: Write>(w: W, groups: &[GroupRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for g in groups {
        wtr.serialize(GroupRow {
            group_id: g.group_id.clone(),
            condition: g.condition.label().to_string(),
            task: g.task.code().to_string(),
            duration_s: g.duration_s,
            incomplete: g.incomplete,
            epoch_ms: g.epoch_ms,
            started_ms: g.started_ms,
            ended_ms: g.ended_ms,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Group metadata as read back from `groups.csv` (rosters live in `roster.csv`).
#[derive(Debug, Clone, PartialEq)]
pub struct GroupMeta {
    pub group_id: String,
    pub condition: Condition,
    pub task: TaskDomain,
    pub incomplete: bool,
    pub duration_s: f64,
    pub epoch_ms: u64,
    pub started_ms: Option<u64>,
    pub ended_ms: Option<u64>,
}

pub fn read_groups<R: Read>(r: R) -> Result<Vec<GroupMeta>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize::<GroupRow>() {
        let row = row?;
        out.push(GroupMeta {
            group_id: row.group_id,
            condition: row.condition.parse()?,
            task: row.task.parse()?,
            incomplete: row.incomplete,
            duration_s: row.duration_s,
            epoch_ms: row.epoch_ms,
            started_ms: row.started_ms,
            ended_ms: row.ended_ms,
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct RosterRow {
    group_id: String,
    participant_id: String,
    pseudonym: String,
    role: String,
    stance: String,
}

pub fn write_roster<W: Write>(w: W, groups: &[GroupRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for g in groups {
        for p in &g.roster {
            wtr.serialize(RosterRow {
                group_id: g.group_id.clone(),
                participant_id: p.id.clone(),
                pseudonym: p.pseudonym.clone(),
                role: match p.role {
                    Role::Human => "Human".into(),
                    Role::Agent => "Agent".into(),
                },
                stance: match p.stance {
                    Some(Stance::Supportive) => "Supportive".into(),
                    Some(Stance::Contrarian) => "Contrarian".into(),
                    None => String::new(),
                },
            })?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Rebuilds group records from `groups.csv` metadata plus `roster.csv` rows.
pub fn read_roster<R: Read>(r: R, meta: &[GroupMeta]) -> Result<Vec<GroupRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut groups: Vec<GroupRecord> = meta
        .iter()
        .map(|m| GroupRecord {
            group_id: m.group_id.clone(),
            condition: m.condition,
            task: m.task,
            roster: Vec::new(),
            epoch_ms: m.epoch_ms,
            started_ms: m.started_ms,
            ended_ms: m.ended_ms,
            duration_s: m.duration_s,
            incomplete: m.incomplete,
        })
        .collect();
    for row in rdr.deserialize::<RosterRow>() {
        let row = row?;
        let g = groups
            .iter_mut()
            .find(|g| g.group_id == row.group_id)
            .ok_or_else(|| Error::Data(format!("roster row for unknown group {}", row.group_id)))?;
        let stance = match row.stance.as_str() {
            "Supportive" => Some(Stance::Supportive),
            "Contrarian" => Some(Stance::Contrarian),
            _ => None,
        };
        let role = match row.role.as_str() {
            "Agent" | "AI" => Role::Agent,
            _ => Role::Human,
        };
        g.roster.push(Participant { id: row.participant_id, pseudonym: row.pseudonym, role, stance });
    }
    for g in &groups {
        g.validate()?;
    }
    Ok(groups)
}

#[derive(Debug, Serialize)]
struct UtteranceRow<'a> {
    group_id: &'a str,
    speaker: &'a str,
    ts_ms: u64,
    word_count: u32,
    latency_s: Option<f64>,
    text: &'a str,
}

pub fn write_utterances<W: Write>(w: W, utterances: &[Utterance]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for u in utterances {
        wtr.serialize(UtteranceRow {
            group_id: &u.group_id,
            speaker: &u.speaker,
            ts_ms: u.ts_ms,
            word_count: u.word_count,
            latency_s: u.latency_s,
            text: &u.text,
        })?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct UtteranceIn {
    group_id: String,
    speaker: String,
    ts_ms: u64,
    #[serde(default)]
    word_count: Option<u32>,
    text: String,
}

/// Reads `utterances.csv`. Word counts are recomputed from the text; the
/// second value counts rows whose stored count disagreed.
pub fn read_utterances<R: Read>(r: R) -> Result<(Vec<Utterance>, usize)> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    let mut mismatches = 0;
    for row in rdr.deserialize::<UtteranceIn>() {
        let row = row?;
        let wc = word_count(&row.text);
        if row.word_count.is_some_and(|given| given != wc) {
            mismatches += 1;
            log::warn!("group {} ts {}: word count replaced by recomputed {wc}", row.group_id, row.ts_ms);
        }
        out.push(Utterance {
            group_id: row.group_id,
            speaker: row.speaker,
            ts_ms: row.ts_ms,
            text: row.text,
            word_count: wc,
            cue_values: Default::default(),
            latency_s: None,
        });
    }
    Ok((out, mismatches))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn judgment_csv_has_the_documented_header() {
        let mut buf = Vec::new();
        write_judgments(&mut buf, &[]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "rater_id,group_id,target,humanness,trust,supportiveness,conflictuality,judgment,truth,impression_text"
        );
    }

    #[test]
    fn judgment_csv_round_trips() {
        let j = JudgmentRecord {
            rater_id: "p1".into(),
            group_id: "g1".into(),
            target: "Bob".into(),
            ratings: Ratings { humanness: 2, trust: 3, supportiveness: 6, conflictuality: 7 },
            judgment: IdentityJudgment::NotSure,
            impression_text: "hard to say, \"quick\" replies".into(),
            truth: Some(Truth::AI),
        };
        let mut buf = Vec::new();
        write_judgments(&mut buf, std::slice::from_ref(&j)).unwrap();
        let back = read_judgments(&buf[..]).unwrap();
        assert_eq!(back, vec![j]);
    }

    #[test]
    fn utterance_word_counts_are_recomputed() {
        let csv =
            "group_id,speaker,ts_ms,word_count,latency_s,text\ng1,Bob,0,5,,hi there all\ng1,Kevin,900,2,0.9,ok then\n";
        let (us, bad) = read_utterances(csv.as_bytes()).unwrap();
        assert_eq!(bad, 1);
        assert_eq!(us[0].word_count, 3);
        assert_eq!(us[1].word_count, 2);
    }

    #[test]
    fn out_of_range_rating_is_a_data_error() {
        let csv = "rater_id,group_id,target,humanness,trust,supportiveness,conflictuality,judgment,truth,impression_text\np1,g1,Bob,8,3,3,3,AI,AI,\n";
        assert!(read_judgments(csv.as_bytes()).is_err());
    }
}
