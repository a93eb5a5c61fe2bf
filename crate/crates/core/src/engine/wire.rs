//! JSON text frames exchanged with live clients. Nothing a participant
//! receives names a role, a stance or a condition.

use serde::{Deserialize, Serialize};

use super::session::EvalBundle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ClientMsg {
    Join {
        #[serde(default)]
        code: Option<String>,
    },
    Chat {
        text: String,
    },
    EvalSubmit {
        evaluations: Vec<EvalBundle>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Matched { group_id: String, pseudonym: String, teammates: Vec<String> },
    TaskBrief { text: String, familiarisation_ms: u64, duration_ms: u64 },
    Chat { id: u64, pseudonym: String, text: String, ts_ms: u64 },
    Timer { phase: String, remaining_ms: u64 },
    SessionEnd,
    EvalOpen { targets: Vec<String> },
    EvalAck { accepted: usize },
    Error { code: String, message: String },
}

impl ServerMsg {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        ServerMsg::Error { code: code.to_string(), message: message.into() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("wire messages serialize")
    }
}
