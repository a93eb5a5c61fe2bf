//! Timed triad sessions: matching, session state machine, wire protocol and
//! the live WebSocket server.

pub mod config;
pub mod driver;
pub mod pool;
pub mod server;
pub mod session;
pub mod wire;

pub use config::{draw_assignment, EngineConfig};
pub use driver::{run_agent_turns, AgentDriver};
pub use pool::{MatchPool, WaitStats, Waiting};
pub use server::{router, serve, ServerHandle};
pub use session::{EvalBundle, Outbound, Phase, SessionConfig, SessionState};
pub use wire::{ClientMsg, ServerMsg};
