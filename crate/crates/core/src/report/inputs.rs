//! Analysis inputs: an event log, an exported table directory, or a fresh
//! simulation, normalised to groups + utterances + truth-joined judgments.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::model::csvio::{
    read_groups, read_judgments, read_roster, read_utterances, write_groups, write_judgments, write_roster,
    write_utterances,
};
use crate::model::{drop_self_judgments, join_truth, EventLog, GroupRecord, IngestReport, JudgmentRecord, Utterance};
use crate::sim::SimOutput;

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub const TABLES: [&str; 4] = ["groups.csv", "roster.csv", "utterances.csv", "judgments.csv"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Inputs {
    pub groups: Vec<GroupRecord>,
    pub utterances: Vec<Utterance>,
    pub judgments: Vec<JudgmentRecord>,
    pub report: IngestReport,
    /// Source name → sha256 of its bytes.
    pub checksums: BTreeMap<String, String>,
}

impl Inputs {
    /// Replays a log; incomplete groups are dropped unless asked otherwise.
    pub fn from_log(log: &EventLog, include_incomplete: bool) -> Result<Self> {
        let mut replay = log.replay()?;
        let report = replay.report.clone();
        if !include_incomplete {
            if report.incomplete_groups > 0 {
                info!("excluding {} incomplete group(s)", report.incomplete_groups);
            }
            replay = replay.complete_only();
        }
        let judgments = join_truth(&replay.judgments, &replay.groups)?;
        let checksums = BTreeMap::from([("events.ndjson".to_string(), sha256_hex(log.to_ndjson().as_bytes()))]);
        Ok(Inputs { groups: replay.groups, utterances: replay.utterances, judgments, report, checksums })
    }

    pub fn from_sim(out: &SimOutput) -> Result<Self> {
        Self::from_log(&out.log, false)
    }

    /// Reads exported tables from a directory (`groups.csv`, `roster.csv`,
    /// `judgments.csv`, optional `utterances.csv`).
    pub fn from_tables(dir: &Path, include_incomplete: bool) -> Result<Self> {
        let read = |name: &str| -> Result<Vec<u8>> {
            fs::read(dir.join(name)).map_err(|e| Error::Data(format!("{}: {e}", dir.join(name).display())))
        };
        let mut checksums = BTreeMap::new();
        let g = read("groups.csv")?;
        let r = read("roster.csv")?;
        let j = read("judgments.csv")?;
        let meta = read_groups(&g[..])?;
        let mut groups = read_roster(&r[..], &meta)?;
        let mut report = IngestReport::default();
        let mut utterances = Vec::new();
        if dir.join("utterances.csv").exists() {
            let u = read("utterances.csv")?;
            let (us, mismatches) = read_utterances(&u[..])?;
            report.word_count_mismatches = mismatches;
            report.messages = us.len();
            utterances = us;
            checksums.insert("utterances.csv".into(), sha256_hex(&u));
        } else {
            warn!("{} has no utterances.csv; cue-based stages will have no data", dir.display());
        }
        let (judgments, dropped) = drop_self_judgments(read_judgments(&j[..])?, &groups);
        report.self_judgments_dropped = dropped;
        report.incomplete_groups = groups.iter().filter(|g| g.incomplete).count();
        if !include_incomplete {
            let keep: std::collections::HashSet<String> =
                groups.iter().filter(|g| !g.incomplete).map(|g| g.group_id.clone()).collect();
            groups.retain(|g| keep.contains(&g.group_id));
            utterances.retain(|u| keep.contains(&u.group_id));
        }
        let ids: std::collections::HashSet<&str> = groups.iter().map(|g| g.group_id.as_str()).collect();
        let judgments: Vec<JudgmentRecord> =
            judgments.into_iter().filter(|j| ids.contains(j.group_id.as_str())).collect();
        let judgments = join_truth(&judgments, &groups)?;
        for (name, bytes) in [("groups.csv", &g), ("roster.csv", &r), ("judgments.csv", &j)] {
            checksums.insert(name.into(), sha256_hex(bytes));
        }
        Ok(Inputs { groups, utterances, judgments, report, checksums })
    }

    /// A log file, a directory holding `events.ndjson`, or a table directory.
    pub fn load(path: &Path, include_incomplete: bool) -> Result<Self> {
        if path.is_dir() {
            let log = path.join("events.ndjson");
            if log.exists() {
                return Self::from_log(&EventLog::load(&log)?, include_incomplete);
            }
            return Self::from_tables(path, include_incomplete);
        }
        if !path.exists() {
            return Err(Error::Data(format!("{} does not exist", path.display())));
        }
        if path.extension().and_then(|e| e.to_str()) == Some("csv") {
            return Self::from_judgments_csv(path);
        }
        Self::from_log(&EventLog::load(path)?, include_incomplete)
    }

    /// A bare judgments table with its truth column filled; enough for the
    /// signal-detection and text stages.
    pub fn from_judgments_csv(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let judgments = read_judgments(&bytes[..])?;
        if let Some(j) = judgments.iter().find(|j| j.truth.is_none()) {
            return Err(Error::Data(format!(
                "{}: judgment by {} of {} has no truth label; supply the roster too",
                path.display(),
                j.rater_id,
                j.target
            )));
        }
        let name = path.file_name().map_or("judgments.csv".into(), |n| n.to_string_lossy().into_owned());
        Ok(Inputs { judgments, checksums: BTreeMap::from([(name, sha256_hex(&bytes))]), ..Default::default() })
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty() && self.judgments.is_empty()
    }

    /// Writes the four flat tables; returns (file name, sha256) pairs.
    pub fn write_tables(&self, dir: &Path) -> Result<Vec<(String, String)>> {
        fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for name in TABLES {
            let mut buf = Vec::new();
            match name {
                "groups.csv" => write_groups(&mut buf, &self.groups)?,
                "roster.csv" => write_roster(&mut buf, &self.groups)?,
                "utterances.csv" => write_utterances(&mut buf, &self.utterances)?,
                _ => write_judgments(&mut buf, &self.judgments)?,
            }
            fs::write(dir.join(name), &buf)?;
            out.push((name.to_string(), sha256_hex(&buf)));
        }
        Ok(out)
    }
}
