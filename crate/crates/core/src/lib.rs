//! Multi-layer memory for long-horizon dialogue agents.
//!
//! Sessions flow into three memory layers (a working window, a decayed
//! episodic state and a semantic entity graph). Queries are answered by
//! gating between layers, retrieving under a token budget and fusing the
//! result into a bounded-entropy vector.

pub mod embedding;
pub mod engine;
pub mod error;
pub mod harness;
pub mod memory;
pub mod retention;
pub mod retrieval;
pub mod snapshot;

pub use embedding::{cosine, EmbedError, EmbedMode, Embedder, EmbedderConfig, Embedding};
pub use engine::{Answer, Engine, EngineConfig, LayerSwitches, Responder, StepOutput, TemplateResponder};
pub use error::{Error, Result};
pub use memory::{MemoryState, Session, Utterance};
pub use snapshot::Snapshot;
