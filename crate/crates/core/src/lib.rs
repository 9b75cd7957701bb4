//! Event-tree analysis and self-evolving executor/validator agents for
//! emergency decision support.
//!
//! - [`event_tree`]: sequence enumeration, outcome frequencies, mitigation.
//! - [`gateway`]: chat/embedding backends (HTTP, scripted replay, hashing).
//! - [`memory`]: per-task record libraries and experience bases.
//! - [`agents`]: prompt assembly and response parsing for the six roles.
//! - [`pipeline`]: the executor/validator loop, training, inference, chaining.
//! - [`evaluation`]: datasets, judging, accuracy tables, accumulation curves.
//! - [`cli`]: the `evotree` command surface.

pub mod exec;
pub mod types;
pub mod event_tree;
pub mod gateway;
pub mod memory;
pub mod agents;
pub mod pipeline;
pub mod evaluation;
pub mod cli;

pub use exec::ExecMode;
pub use types::{AgentRole, ReasonMode, StrategyKind, Task};
