//! Cue extraction: dictionary rates, latency, lexical diversity, exposure
//! controls and z-scoring.

pub mod dictionary;
pub mod mtld;
pub mod profile;

pub use dictionary::{normalize_token, score_utterance, CueDictionary, UtteranceScore, ANALYSIS_CUES};
pub use mtld::{diversity_tokens, mtld, mtld_tokens};
pub use profile::{
    aggregate_target, assign_latencies, extract_profiles, merge, read_merged, read_profiles, score_utterances,
    standardize, standardize_profiles, write_merged, write_profiles, CueConfig, CueProfile, Feature, LatencyMode,
    MergeReport, MergedRow, Standardized,
};
