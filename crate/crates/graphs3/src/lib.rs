//! graphs3: an agentic retrieval engine over textual knowledge graphs.
//!
//! The crate provides the pieces of a train-data factory for interactive
//! graph retrieval: the episode environment ([`env`]), pluggable decision
//! policies ([`policy`]), trajectory synthesis and SFT emission
//! ([`synthesis`]), trajectory refinement and stepwise reward labeling
//! ([`refine`]), and retrieval evaluation against static baselines
//! ([`eval`]).

pub mod env;
pub mod eval;
pub mod graph;
pub mod norm;
pub mod parallel;
pub mod policy;
pub mod refine;
pub mod synthesis;

pub use env::{
    apply_action, init_state, is_terminal, serialize_state, step_action, validate_action, Action,
    ActionJson, AgentState, EpisodeConfig, PromptTemplate, Query, Validity,
};
pub use graph::{EntityId, GraphFormat, GraphStats, RelationId, TextualGraph, Triple, TripleId};
