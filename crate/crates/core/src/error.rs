use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error. Variants map onto the CLI exit codes (2 config, 3 data,
/// 4 numeric).
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("event for group {group} at {ts_ms} ms precedes last event at {last_ms} ms")]
    NonMonotonic { group: String, ts_ms: u64, last_ms: u64 },
    #[error("unresolved judgment targets: {0:?}")]
    UnresolvedTargets(Vec<String>),
    #[error("phase error: {0}")]
    Phase(String),
    #[error("roster error: {0}")]
    Roster(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("SDT undefined: {0}")]
    UndefinedSdt(String),
    #[error("degenerate cue column `{0}` (zero variance)")]
    DegenerateCue(String),
    #[error("perfect or quasi-complete separation: {0}")]
    Separation(String),
    #[error("did not converge after {iterations} iterations (gradient norms: {trace:?})")]
    NonConvergence { iterations: usize, trace: Vec<f64> },
    #[error("singular design; collinear columns: {0:?}")]
    Singular(Vec<String>),
    #[error("dictionary line {line}: {message}")]
    Dictionary { line: usize, message: String },
    #[error("stratum error in groups {0:?}: each stratum needs exactly one positive")]
    Stratum(Vec<String>),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Dictionary { .. } => 2,
            Error::Numeric(_)
            | Error::Separation(_)
            | Error::NonConvergence { .. }
            | Error::Singular(_)
            | Error::DegenerateCue(_)
            | Error::UndefinedSdt(_) => 4,
            _ => 3,
        }
    }
}
