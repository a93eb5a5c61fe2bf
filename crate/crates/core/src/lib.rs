//! Synchronous triad-chat experiment engine with undisclosed, persona-driven
//! AI teammates, plus the statistics used to ask whether observers can tell
//! the AI teammates apart from the humans.
//!
//! Layout:
//! - [`model`]: domain types, the append-only event log, CSV tables.
//! - [`engine`]: match pool, session state machine, wire protocol, live server.
//! - [`agent`]: participation scheduler, persona prompts, text generation.
//! - [`sim`]: headless synthetic experiments with planted identity effects.
//! - [`cues`]: dictionary cues, latency, MTLD, z-scoring.
//! - [`sdt`]: signal detection and descriptive comparisons.
//! - [`modeling`]: logistic / conditional logistic fits and diagnosticity.
//! - [`rsa`]: representational similarity analysis and MDS.
//! - [`textstats`]: impression-text statistics.
//! - [`report`]: end-to-end pipeline, manifests, SVG plots.

pub mod agent;
pub mod cues;
pub mod engine;
pub mod error;
pub mod model;
pub mod modeling;
pub mod numeric;
pub mod report;
pub mod rsa;
pub mod sdt;
pub mod sim;
pub mod textstats;

pub use error::{Error, Result};
