use serde::{Deserialize, Serialize};

use super::session::{Session, Utterance};
use crate::embedding::{Embedder, Embedding};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingEntry {
    pub utterance: Utterance,
    pub embedding: Embedding,
}

/// Bounded buffer holding the tail of the most recent session.
///
/// Holds at most `window_k` entries and `capacity_tokens` whitespace tokens,
/// oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkingMemory {
    entries: Vec<WorkingEntry>,
    window_k: usize,
    capacity_tokens: usize,
}

impl WorkingMemory {
    pub fn new(window_k: usize, capacity_tokens: usize) -> Result<Self> {
        if window_k == 0 || capacity_tokens == 0 {
            return Err(Error::InvalidConfig(
                "working memory window and token capacity must be positive".into(),
            ));
        }
        Ok(Self {
            entries: Vec::new(),
            window_k,
            capacity_tokens,
        })
    }

    pub fn entries(&self) -> &[WorkingEntry] {
        &self.entries
    }

    pub fn window_k(&self) -> usize {
        self.window_k
    }

    pub fn capacity_tokens(&self) -> usize {
        self.capacity_tokens
    }

    pub fn token_total(&self) -> usize {
        self.entries.iter().map(|e| e.utterance.token_count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Replaces the buffer with the last `window_k` utterances of `session`,
    /// then trims from the front until the token budget holds.
    pub fn update(&self, session: &Session, embedder: &Embedder) -> Result<WorkingMemory> {
        let utterances = session.utterances();
        let start = utterances.len().saturating_sub(self.window_k);
        let mut tail = &utterances[start..];

        let mut tokens: usize = tail.iter().map(|u| u.token_count).sum();
        while tokens > self.capacity_tokens {
            tokens -= tail[0].token_count;
            tail = &tail[1..];
        }

        let texts: Vec<&str> = tail.iter().map(|u| u.text.as_str()).collect();
        let embeddings = embedder.embed_batch(&texts)?;
        let entries = tail
            .iter()
            .cloned()
            .zip(embeddings)
            .map(|(utterance, embedding)| WorkingEntry {
                utterance,
                embedding,
            })
            .collect();

        Ok(WorkingMemory {
            entries,
            window_k: self.window_k,
            capacity_tokens: self.capacity_tokens,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbedderConfig;

    fn embedder() -> Embedder {
        Embedder::new(EmbedderConfig::deterministic(32, 0)).unwrap()
    }

    fn session(index: u64, texts: &[&str]) -> Session {
        let utterances = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Utterance::new(index, i as u64, "user", *t))
            .collect();
        Session::new(index, utterances).unwrap()
    }

    fn texts(wm: &WorkingMemory) -> Vec<&str> {
        wm.entries().iter().map(|e| e.utterance.text.as_str()).collect()
    }

    #[test]
    fn under_window_keeps_everything() {
        let wm = WorkingMemory::new(5, 100).unwrap();
        let out = wm.update(&session(0, &["a", "b", "c"]), &embedder()).unwrap();
        assert_eq!(texts(&out), ["a", "b", "c"]);
    }

    #[test]
    fn window_keeps_the_tail_in_order() {
        let wm = WorkingMemory::new(2, 100).unwrap();
        let out = wm
            .update(&session(0, &["a", "b", "c", "d", "e"]), &embedder())
            .unwrap();
        assert_eq!(texts(&out), ["d", "e"]);
    }

    #[test]
    fn token_budget_trims_oldest() {
        // Four 4-token utterances against a 10-token budget: 16 -> 12 -> 8.
        let wm = WorkingMemory::new(4, 10).unwrap();
        let s = session(0, &["a a a a", "b b b b", "c c c c", "d d d d", "e e e e"]);
        let out = wm.update(&s, &embedder()).unwrap();
        assert_eq!(texts(&out), ["d d d d", "e e e e"]);
        assert_eq!(out.token_total(), 8);

        // Four 3-token utterances: 12 -> 9, the oldest of the four dropped.
        let s = session(0, &["z z z", "a a a", "b b b", "c c c", "d d d"]);
        let out = wm.update(&s, &embedder()).unwrap();
        assert_eq!(texts(&out), ["b b b", "c c c", "d d d"]);
        assert_eq!(out.token_total(), 9);
    }

    #[test]
    fn previous_session_is_replaced() {
        let wm = WorkingMemory::new(4, 100).unwrap();
        let e = embedder();
        let first = wm.update(&session(0, &["a", "b"]), &e).unwrap();
        let second = first.update(&session(1, &["c"]), &e).unwrap();
        assert_eq!(texts(&second), ["c"]);
    }

    #[test]
    fn oversized_single_utterance_leaves_buffer_empty() {
        let wm = WorkingMemory::new(4, 2).unwrap();
        let out = wm.update(&session(0, &["one two three"]), &embedder()).unwrap();
        assert!(out.is_empty());
    }

    #[test]
    fn zero_capacities_are_rejected() {
        assert!(WorkingMemory::new(0, 10).is_err());
        assert!(WorkingMemory::new(3, 0).is_err());
    }
}
