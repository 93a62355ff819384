use std::cmp::Ordering;
use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::session::Session;
use crate::embedding::{cosine, Embedder, Embedding};
use crate::error::{Error, Result};

/// Compact extractive summary of one session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub session_index: u64,
    pub text: String,
    pub embedding: Embedding,
    pub salience: f64,
}

/// Extractive summary: the `m` utterances closest to the session centroid,
/// concatenated in their original order.
///
/// Ties in centroid similarity go to the lower turn index. Salience is the
/// mean similarity of the selected utterances, clamped to `[0, 1]`.
pub fn summarize(session: &Session, m: usize, embedder: &Embedder) -> Result<SummaryRecord> {
    if m == 0 {
        return Err(Error::Contract("summary size m must be >= 1".into()));
    }
    let utterances = session.utterances();
    let texts: Vec<&str> = utterances.iter().map(|u| u.text.as_str()).collect();
    let embeddings = embedder.embed_batch(&texts)?;

    let mut centroid = Embedding::zeros(embedder.dim());
    for e in &embeddings {
        centroid.add_scaled(e, 1.0 / embeddings.len() as f64)?;
    }

    let mut scored = Vec::with_capacity(utterances.len());
    for (pos, e) in embeddings.iter().enumerate() {
        scored.push((pos, cosine(e, &centroid)?));
    }
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(Ordering::Equal)
            .then_with(|| utterances[a.0].turn_index.cmp(&utterances[b.0].turn_index))
    });
    scored.truncate(m);
    scored.sort_by_key(|(pos, _)| *pos);

    let text = scored
        .iter()
        .map(|(pos, _)| utterances[*pos].text.as_str())
        .collect::<Vec<_>>()
        .join(" ");
    let salience = (scored.iter().map(|(_, c)| c).sum::<f64>() / scored.len() as f64).clamp(0.0, 1.0);
    let embedding = embedder.embed(&text)?;

    Ok(SummaryRecord {
        session_index: session.index(),
        text,
        embedding,
        salience,
    })
}

/// When the blended episodic vector is rescaled to unit length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Renormalize {
    /// Keep the raw convex blend.
    Never,
    /// Rescale only if the blend's norm exceeds 1.
    #[default]
    AboveUnit,
    /// Rescale every non-zero blend.
    Always,
}

/// Exponentially decayed blend of session summaries plus a bounded log of
/// the summaries themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodicMemory {
    state: Embedding,
    log: VecDeque<SummaryRecord>,
    alpha: f64,
    capacity: usize,
    renormalize: Renormalize,
}

impl EpisodicMemory {
    pub fn new(dim: usize, alpha: f64, capacity: usize, renormalize: Renormalize) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidConfig(format!("alpha must lie in [0, 1], got {alpha}")));
        }
        if capacity == 0 {
            return Err(Error::InvalidConfig("episodic capacity must be positive".into()));
        }
        Ok(Self {
            state: Embedding::zeros(dim),
            log: VecDeque::with_capacity(capacity),
            alpha,
            capacity,
            renormalize,
        })
    }

    pub fn state(&self) -> &Embedding {
        &self.state
    }

    pub fn log(&self) -> &VecDeque<SummaryRecord> {
        &self.log
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// `state <- alpha * state + (1 - alpha) * summary`, then append the
    /// summary to the log, evicting the oldest record when full.
    pub fn update(&self, summary: SummaryRecord) -> Result<EpisodicMemory> {
        let mut state = self.state.scaled(self.alpha);
        state.add_scaled(&summary.embedding, 1.0 - self.alpha)?;
        let norm = state.norm();
        let rescale = match self.renormalize {
            Renormalize::Never => false,
            Renormalize::AboveUnit => norm > 1.0,
            Renormalize::Always => norm > 0.0,
        };
        if rescale {
            state = state.normalized();
        }

        let mut log = self.log.clone();
        if log.len() == self.capacity {
            log.pop_front();
        }
        log.push_back(summary);

        Ok(EpisodicMemory {
            state,
            log,
            alpha: self.alpha,
            capacity: self.capacity,
            renormalize: self.renormalize,
        })
    }
}
