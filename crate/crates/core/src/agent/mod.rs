//! The undisclosed AI teammate: participation scheduling, persona prompts and
//! text generation.

pub mod generate;
pub mod persona;
pub mod scheduler;

pub use generate::{
    build_generator, generate_reply, truncate_words, GenerationError, GenerationParams, GeneratorConfig, HttpGenerator,
    StubGenerator, TextGenerator,
};
pub use persona::{build_prompt, PersonaSpec, Prompt, TranscriptLine};
pub use scheduler::{
    arbitrate_collision, decide_speak, schedule_next_scan, AgentState, Arbitration, ParticipationScheduler,
    SchedulerConfig,
};
