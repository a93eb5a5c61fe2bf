//! Shared domain types, the event log, and flat-table I/O.

pub mod csvio;
pub mod eventlog;
pub mod types;

pub use eventlog::{drop_self_judgments, join_truth, Event, EventKind, EventLog, EventLogWriter, IngestReport, Replay};
pub use types::*;
