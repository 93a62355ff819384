//! The three memory layers and their consolidation updates.
//!
//! * [`WorkingMemory`] keeps the tail of the latest session under a window
//!   and token budget.
//! * [`EpisodicMemory`] keeps an exponentially decayed blend of session
//!   summaries plus a ring buffer of the summaries.
//! * [`SemanticGraph`] keeps entity attributes and relation edges with
//!   recency-wins conflict resolution and importance-based eviction.
//!
//! Every update returns a new value; nothing is mutated in place.

mod episodic;
mod extract;
mod semantic;
mod session;
mod working;

use serde::{Deserialize, Serialize};

pub use episodic::{summarize, EpisodicMemory, Renormalize, SummaryRecord};
pub use extract::extract_facts;
pub use semantic::{AttributeValue, Edge, EntityNode, SemanticGraph, SUPERSEDED_HISTORY};
pub use session::{
    read_sessions_jsonl, whitespace_tokens, write_sessions_jsonl, Fact, Session, SessionRecord,
    Utterance,
};
pub use working::{WorkingEntry, WorkingMemory};

/// Full memory state after some number of ingested sessions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryState {
    pub working: WorkingMemory,
    pub episodic: EpisodicMemory,
    pub semantic: SemanticGraph,
    /// Highest ingested session index; `None` before the first session.
    pub session_cursor: Option<u64>,
    /// Whitespace tokens over every ingested utterance.
    pub history_tokens: u64,
}

impl MemoryState {
    pub fn new(working: WorkingMemory, episodic: EpisodicMemory, semantic: SemanticGraph) -> Self {
        Self {
            working,
            episodic,
            semantic,
            session_cursor: None,
            history_tokens: 0,
        }
    }

    /// Index the next ingested session must carry.
    pub fn next_session_index(&self) -> u64 {
        self.session_cursor.map_or(0, |c| c + 1)
    }
}
