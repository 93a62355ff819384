//! Layer gating, budgeted retrieval and entropy-bounded fusion.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embedding::{cosine, Embedder, Embedding};
use crate::error::{Error, Result};
use crate::memory::{whitespace_tokens, MemoryState};

/// Maximum number of temperature halvings during sharpening.
pub const MAX_SHARPEN_STEPS: u32 = 64;

/// Index-proportional offset applied to normalized magnitudes before
/// sharpening so that exactly tied components resolve to the lowest index.
const TIE_BREAK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layer {
    Working,
    Episodic,
    Semantic,
}

impl Layer {
    pub const ALL: [Layer; 3] = [Layer::Working, Layer::Episodic, Layer::Semantic];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub text: String,
    pub embedding: Embedding,
    pub session_index: u64,
}

impl Query {
    pub fn new(text: impl Into<String>, session_index: u64, embedder: &Embedder) -> Result<Self> {
        let text = text.into();
        let embedding = embedder.embed(&text)?;
        Ok(Self {
            text,
            embedding,
            session_index,
        })
    }
}

/// Softmax weights over the three layers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatingWeights {
    pub gamma_w: f64,
    pub gamma_e: f64,
    pub gamma_s: f64,
    pub beta: f64,
}

impl GatingWeights {
    pub fn uniform(beta: f64) -> Self {
        let third = 1.0 / 3.0;
        Self {
            gamma_w: third,
            gamma_e: third,
            gamma_s: third,
            beta,
        }
    }

    pub fn weight(&self, layer: Layer) -> f64 {
        match layer {
            Layer::Working => self.gamma_w,
            Layer::Episodic => self.gamma_e,
            Layer::Semantic => self.gamma_s,
        }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.gamma_w, self.gamma_e, self.gamma_s]
    }
}

/// `gamma_i = exp(beta r_i) / sum_j exp(beta r_j)`, evaluated with the
/// maximum subtracted.
pub fn softmax_gate(relevance: [f64; 3], beta: f64) -> Result<GatingWeights> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(Error::Contract(format!("beta must be finite and > 0, got {beta}")));
    }
    if relevance.iter().any(|r| !r.is_finite()) {
        return Err(Error::Contract("layer relevance must be finite".into()));
    }
    let max = relevance.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = relevance.map(|r| (beta * (r - max)).exp());
    let sum: f64 = exps.iter().sum();
    Ok(GatingWeights {
        gamma_w: exps[0] / sum,
        gamma_e: exps[1] / sum,
        gamma_s: exps[2] / sum,
        beta,
    })
}

/// Vector standing in for a whole layer when scoring it against a query.
///
/// Working: renormalized mean of entry embeddings. Episodic: the decayed
/// state. Semantic: renormalized importance-weighted mean of node
/// embeddings. Empty layers give the zero vector.
pub fn layer_representation(state: &MemoryState, layer: Layer) -> Result<Embedding> {
    let dim = state.episodic.state().dim();
    match layer {
        Layer::Working => {
            let entries = state.working.entries();
            let mut acc = Embedding::zeros(dim);
            for entry in entries {
                acc.add_scaled(&entry.embedding, 1.0 / entries.len() as f64)?;
            }
            Ok(acc.normalized())
        }
        Layer::Episodic => Ok(state.episodic.state().clone()),
        Layer::Semantic => {
            let nodes = state.semantic.nodes();
            let total: f64 = nodes.values().map(|n| n.importance).sum();
            let mut acc = Embedding::zeros(dim);
            if total > 0.0 {
                for node in nodes.values() {
                    acc.add_scaled(&node.embedding, node.importance / total)?;
                }
            }
            Ok(acc.normalized())
        }
    }
}

fn layer_representations(state: &MemoryState) -> Result<[Embedding; 3]> {
    Ok([
        layer_representation(state, Layer::Working)?,
        layer_representation(state, Layer::Episodic)?,
        layer_representation(state, Layer::Semantic)?,
    ])
}

/// Cosine relevance of each layer to the query, in `(w, e, s)` order.
pub fn layer_relevance(query: &Query, state: &MemoryState) -> Result<[f64; 3]> {
    let reps = layer_representations(state)?;
    Ok([
        cosine(&query.embedding, &reps[0])?,
        cosine(&query.embedding, &reps[1])?,
        cosine(&query.embedding, &reps[2])?,
    ])
}

pub fn gate(query: &Query, state: &MemoryState, beta: f64) -> Result<GatingWeights> {
    softmax_gate(layer_relevance(query, state)?, beta)
}

/// One memory item admitted into the context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedItem {
    pub layer: Layer,
    /// Speaker for utterances, `summary` or `fact` otherwise.
    pub label: String,
    pub text: String,
    pub session_index: u64,
    pub turn_index: u64,
    /// Cosine to the query.
    pub score: f64,
    /// `score` times the layer's gating weight.
    pub global_score: f64,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub vector: Embedding,
    pub weights: GatingWeights,
    pub working: Vec<RetrievedItem>,
    pub episodic: Vec<RetrievedItem>,
    pub semantic: Vec<RetrievedItem>,
    pub token_cost: usize,
}

impl RetrievalResult {
    pub fn items(&self) -> impl Iterator<Item = &RetrievedItem> {
        self.working.iter().chain(&self.episodic).chain(&self.semantic)
    }
}

fn by_score_then_position(a: &RetrievedItem, b: &RetrievedItem, global: bool) -> Ordering {
    let (sa, sb) = if global {
        (a.global_score, b.global_score)
    } else {
        (a.score, b.score)
    };
    sb.partial_cmp(&sa)
        .unwrap_or(Ordering::Equal)
        .then(a.session_index.cmp(&b.session_index))
        .then(a.turn_index.cmp(&b.turn_index))
        .then(a.layer.cmp(&b.layer))
}

fn candidates(query: &Query, state: &MemoryState, top_j: usize) -> Result<Vec<RetrievedItem>> {
    let mut per_layer: [Vec<RetrievedItem>; 3] = Default::default();
    for entry in state.working.entries() {
        per_layer[0].push(RetrievedItem {
            layer: Layer::Working,
            label: entry.utterance.speaker.clone(),
            text: entry.utterance.text.clone(),
            session_index: entry.utterance.session_index,
            turn_index: entry.utterance.turn_index,
            score: cosine(&query.embedding, &entry.embedding)?,
            global_score: 0.0,
            tokens: entry.utterance.token_count,
        });
    }
    for record in state.episodic.log() {
        per_layer[1].push(RetrievedItem {
            layer: Layer::Episodic,
            label: "summary".into(),
            text: record.text.clone(),
            session_index: record.session_index,
            turn_index: 0,
            score: cosine(&query.embedding, &record.embedding)?,
            global_score: 0.0,
            tokens: whitespace_tokens(&record.text),
        });
    }
    for node in state.semantic.nodes().values() {
        let text = node.render();
        per_layer[2].push(RetrievedItem {
            layer: Layer::Semantic,
            label: "fact".into(),
            tokens: whitespace_tokens(&text),
            text,
            session_index: node.last_updated,
            turn_index: 0,
            score: cosine(&query.embedding, &node.embedding)?,
            global_score: 0.0,
        });
    }
    let mut out = Vec::new();
    for mut items in per_layer {
        items.sort_by(|a, b| by_score_then_position(a, b, false));
        items.truncate(top_j);
        out.extend(items);
    }
    Ok(out)
}

/// Gated retrieval with adaptive weights.
pub fn retrieve(
    query: &Query,
    state: &MemoryState,
    beta: f64,
    top_j: usize,
    token_budget: usize,
) -> Result<RetrievalResult> {
    let weights = gate(query, state, beta)?;
    retrieve_with_weights(query, state, weights, top_j, token_budget)
}

/// Gated retrieval with caller-supplied weights.
///
/// The retrieval vector is the weighted sum of layer representations. Each
/// layer offers its `top_j` items by query cosine; items are then admitted in
/// descending `cosine * gamma` order, skipping any that would overflow
/// `token_budget`.
pub fn retrieve_with_weights(
    query: &Query,
    state: &MemoryState,
    weights: GatingWeights,
    top_j: usize,
    token_budget: usize,
) -> Result<RetrievalResult> {
    if top_j == 0 || token_budget == 0 {
        return Err(Error::Contract("top_j and token_budget must be positive".into()));
    }
    let reps = layer_representations(state)?;
    let mut vector = Embedding::zeros(query.embedding.dim());
    for (layer, rep) in Layer::ALL.iter().zip(&reps) {
        vector.add_scaled(rep, weights.weight(*layer))?;
    }

    let mut pool = candidates(query, state, top_j)?;
    for item in &mut pool {
        item.global_score = item.score * weights.weight(item.layer);
    }
    pool.sort_by(|a, b| by_score_then_position(a, b, true));

    let mut result = RetrievalResult {
        vector,
        weights,
        working: Vec::new(),
        episodic: Vec::new(),
        semantic: Vec::new(),
        token_cost: 0,
    };
    for item in pool {
        if result.token_cost + item.tokens > token_budget {
            continue;
        }
        result.token_cost += item.tokens;
        match item.layer {
            Layer::Working => result.working.push(item),
            Layer::Episodic => result.episodic.push(item),
            Layer::Semantic => result.semantic.push(item),
        }
    }
    for list in [&mut result.working, &mut result.episodic, &mut result.semantic] {
        list.sort_by(|a, b| by_score_then_position(a, b, false));
    }
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedState {
    pub vector: Embedding,
    pub entropy: f64,
    pub context_text: String,
    pub context_tokens: usize,
}

/// Shannon entropy (nats) of the L1-normalized absolute components.
/// The zero vector has entropy 0.
pub fn entropy(values: &[f64]) -> f64 {
    let total: f64 = values.iter().map(|v| v.abs()).sum();
    if total == 0.0 {
        return 0.0;
    }
    -values
        .iter()
        .map(|v| v.abs() / total)
        .filter(|p| *p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

/// Replaces magnitudes by a softmax at halving temperatures until the
/// entropy drops to `epsilon`. Signs are kept.
fn sharpen(raw: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    let max = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scaled: Vec<f64> = raw
        .iter()
        .enumerate()
        .map(|(i, v)| v.abs() / max - TIE_BREAK * i as f64)
        .collect();
    let top = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let mut temperature = 1.0;
    let mut last = f64::INFINITY;
    for _ in 0..MAX_SHARPEN_STEPS {
        temperature /= 2.0;
        let exps: Vec<f64> = scaled.iter().map(|a| ((a - top) / temperature).exp()).collect();
        let sum: f64 = exps.iter().sum();
        let out: Vec<f64> = raw
            .iter()
            .zip(&exps)
            .map(|(v, e)| if *v < 0.0 { -e / sum } else { e / sum })
            .collect();
        last = entropy(&out);
        if last <= epsilon {
            return Ok(out);
        }
    }
    Err(Error::BoundInfeasible {
        entropy: last,
        epsilon,
    })
}

/// Renders admitted items oldest first, one `label: text` line each.
pub fn assemble_context(retrieval: &RetrievalResult) -> String {
    let mut items: Vec<&RetrievedItem> = retrieval.items().collect();
    let layer_rank = |l: Layer| match l {
        Layer::Semantic => 0,
        Layer::Episodic => 1,
        Layer::Working => 2,
    };
    items.sort_by(|a, b| {
        a.session_index
            .cmp(&b.session_index)
            .then(layer_rank(a.layer).cmp(&layer_rank(b.layer)))
            .then(a.turn_index.cmp(&b.turn_index))
            .then_with(|| a.text.cmp(&b.text))
    });
    items
        .iter()
        .map(|i| format!("{}: {}", i.label, i.text))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Convex mix of query and retrieval vectors, sharpened if its entropy
/// exceeds `epsilon`.
pub fn fuse(query: &Query, retrieval: &RetrievalResult, mix: f64, epsilon: f64) -> Result<FusedState> {
    if !(0.0..=1.0).contains(&mix) {
        return Err(Error::Contract(format!("mix must lie in [0, 1], got {mix}")));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Contract(format!("epsilon must be finite and > 0, got {epsilon}")));
    }
    let mut raw = query.embedding.scaled(mix);
    raw.add_scaled(&retrieval.vector, 1.0 - mix)?;

    let raw_entropy = entropy(raw.values());
    let (vector, entropy) = if raw_entropy <= epsilon {
        (raw, raw_entropy)
    } else {
        let sharp = sharpen(raw.values(), epsilon)?;
        let h = entropy(&sharp);
        (Embedding::from_values(sharp), h)
    };

    let context_text = assemble_context(retrieval);
    Ok(FusedState {
        vector,
        entropy,
        context_tokens: whitespace_tokens(&context_text),
        context_text,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::EmbedderConfig;
    use crate::memory::{
        EpisodicMemory, Fact, Renormalize, SemanticGraph, Session, Utterance, WorkingMemory,
    };

    fn embedder() -> Embedder {
        Embedder::new(EmbedderConfig::deterministic(64, 0)).unwrap()
    }

    fn empty_state(dim: usize) -> MemoryState {
        MemoryState::new(
            WorkingMemory::new(8, 256).unwrap(),
            EpisodicMemory::new(dim, 0.5, 4, Renormalize::AboveUnit).unwrap(),
            SemanticGraph::new(16).unwrap(),
        )
    }

    fn exact_softmax(r: [f64; 3], beta: f64) -> [f64; 3] {
        let e = r.map(|x| (beta * x).exp());
        let s = e[0] + e[1] + e[2];
        e.map(|x| x / s)
    }

    #[test]
    fn equal_relevance_is_uniform() {
        for beta in [0.1, 1.0, 25.0] {
            let g = softmax_gate([0.5, 0.5, 0.5], beta).unwrap();
            for w in g.as_array() {
                assert!((w - 1.0 / 3.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn tiny_beta_is_near_uniform() {
        let g = softmax_gate([0.9, -0.4, 0.1], 1e-9).unwrap();
        for w in g.as_array() {
            assert!((w - 1.0 / 3.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn softmax_matches_exact_exponentials() {
        let g = softmax_gate([0.9, 0.5, 0.1], 5.0).unwrap();
        let oracle = exact_softmax([0.9, 0.5, 0.1], 5.0);
        // e^4.5, e^2.5, e^0.5 normalized
        let expected = [0.866_81, 0.117_31, 0.015_88];
        for i in 0..3 {
            assert!((g.as_array()[i] - oracle[i]).abs() < 1e-12);
            assert!((g.as_array()[i] - expected[i]).abs() < 1e-3);
        }
    }

    #[test]
    fn invalid_beta_is_rejected() {
        assert!(softmax_gate([0.0; 3], 0.0).is_err());
        assert!(softmax_gate([0.0; 3], f64::NAN).is_err());
    }

    #[test]
    fn empty_layers_give_zero_representations() {
        let state = empty_state(64);
        for layer in Layer::ALL {
            assert!(layer_representation(&state, layer).unwrap().is_zero());
        }
    }

    #[test]
    fn working_representation_of_one_entry_is_that_entry() {
        let e = embedder();
        let session = Session::new(0, vec![Utterance::new(0, 0, "u", "alice likes jazz")]).unwrap();
        let mut state = empty_state(64);
        state.working = state.working.update(&session, &e).unwrap();
        let rep = layer_representation(&state, Layer::Working).unwrap();
        let v = e.embed("alice likes jazz").unwrap();
        for (a, b) in rep.values().iter().zip(v.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn semantic_representation_is_importance_weighted() {
        let e = embedder();
        let facts = [
            Fact::new("ann", "likes", "tea", 1.0),
            Fact::new("bob", "likes", "jazz", 1.0),
            Fact::new("bob", "lives_in", "oslo", 1.0),
            Fact::new("bob", "works", "baker", 1.0),
        ];
        let mut state = empty_state(64);
        state.semantic = state.semantic.merge(&facts, 0, 0.99, &e).unwrap();
        let e1 = state.semantic.node("ann").unwrap().embedding.clone();
        let e2 = state.semantic.node("bob").unwrap().embedding.clone();
        let mut expected: Vec<f64> = (0..64).map(|i| 0.25 * e1.values()[i] + 0.75 * e2.values()[i]).collect();
        let n = expected.iter().map(|x| x * x).sum::<f64>().sqrt();
        expected.iter_mut().for_each(|x| *x /= n);
        let rep = layer_representation(&state, Layer::Semantic).unwrap();
        for (a, b) in rep.values().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_memory_retrieves_nothing() {
        let e = embedder();
        let q = Query::new("where does alice live", 0, &e).unwrap();
        let r = retrieve(&q, &empty_state(64), 5.0, 4, 512).unwrap();
        assert!(r.vector.is_zero());
        assert_eq!(r.items().count(), 0);
        assert_eq!(r.token_cost, 0);
        for w in r.weights.as_array() {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tiny_budget_admits_no_items_but_keeps_vector() {
        let e = embedder();
        let session = Session::new(
            0,
            vec![Utterance::new(0, 0, "u", "alice likes jazz a lot these days")],
        )
        .unwrap();
        let mut state = empty_state(64);
        state.working = state.working.update(&session, &e).unwrap();
        let q = Query::new("alice jazz", 0, &e).unwrap();
        let r = retrieve(&q, &state, 5.0, 4, 3).unwrap();
        assert_eq!(r.items().count(), 0);
        assert!(!r.vector.is_zero());
    }

    #[test]
    fn greedy_admission_skips_items_that_do_not_fit() {
        // (global score, tokens) = (0.9, 6), (0.8, 5), (0.7, 2) under budget 8.
        // Oracle: walk the list in score order, admit whatever still fits.
        let items = [(0.9, 6usize), (0.8, 5), (0.7, 2)];
        let mut used = 0;
        let mut admitted = Vec::new();
        for (i, (_, tokens)) in items.iter().enumerate() {
            if used + tokens <= 8 {
                used += tokens;
                admitted.push(i);
            }
        }
        assert_eq!(admitted, [0, 2]);

        // Same shape through the real code: three working utterances whose
        // cosine to the query orders them as above.
        let e = embedder();
        let utterances = vec![
            Utterance::new(0, 0, "u", "q1 q2 q3 q4 q5 f1"),
            Utterance::new(0, 1, "u", "q1 q2 q3 f2 f3"),
            Utterance::new(0, 2, "u", "q1 f4"),
        ];
        let session = Session::new(0, utterances).unwrap();
        let mut state = empty_state(64);
        state.working = state.working.update(&session, &e).unwrap();
        let q = Query::new("q1 q2 q3 q4 q5", 0, &e).unwrap();
        let r = retrieve_with_weights(&q, &state, GatingWeights::uniform(1.0), 4, 8).unwrap();
        let scores: Vec<f64> = state
            .working
            .entries()
            .iter()
            .map(|w| cosine(&q.embedding, &w.embedding).unwrap())
            .collect();
        assert!(scores[0] > scores[1] && scores[1] > scores[2]);
        let turns: Vec<u64> = r.working.iter().map(|i| i.turn_index).collect();
        assert_eq!(turns, [0, 2]);
        assert_eq!(r.token_cost, 8);
    }

    #[test]
    fn zero_retrieval_with_full_mix_returns_query() {
        let e = embedder();
        let q = Query::new("a", 0, &e).unwrap();
        let r = retrieve(&q, &empty_state(64), 1.0, 4, 64).unwrap();
        let f = fuse(&q, &r, 1.0, 2.0).unwrap();
        assert_eq!(f.vector, q.embedding);
        assert_eq!(f.entropy, 0.0);
    }

    fn retrieval_with_vector(values: Vec<f64>) -> RetrievalResult {
        RetrievalResult {
            vector: Embedding::from_values(values),
            weights: GatingWeights::uniform(1.0),
            working: vec![],
            episodic: vec![],
            semantic: vec![],
            token_cost: 0,
        }
    }

    #[test]
    fn one_hot_needs_no_sharpening() {
        let mut v = vec![0.0; 8];
        v[3] = -0.7;
        let q = Query {
            text: String::new(),
            embedding: Embedding::zeros(8),
            session_index: 0,
        };
        let f = fuse(&q, &retrieval_with_vector(v.clone()), 0.0, 1e-6).unwrap();
        assert_eq!(f.entropy, 0.0);
        assert_eq!(f.vector.values(), v.as_slice());
    }

    #[test]
    fn uniform_magnitudes_are_sharpened_below_bound() {
        let v: Vec<f64> = (0..8).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
        assert!((entropy(&v) - 8f64.ln()).abs() < 1e-12);
        let q = Query {
            text: String::new(),
            embedding: Embedding::zeros(8),
            session_index: 0,
        };
        let f = fuse(&q, &retrieval_with_vector(v), 0.0, 1.0).unwrap();
        // Recompute entropy from the returned components.
        let total: f64 = f.vector.values().iter().map(|x| x.abs()).sum();
        let h: f64 = f
            .vector
            .values()
            .iter()
            .map(|x| x.abs() / total)
            .filter(|p| *p > 0.0)
            .map(|p| -p * p.ln())
            .sum();
        assert!(h <= 1.0, "{h}");
        assert!((h - f.entropy).abs() < 1e-12);
        assert!(f.vector.values()[1] <= 0.0);
    }

    #[test]
    fn invalid_fuse_parameters() {
        let q = Query {
            text: String::new(),
            embedding: Embedding::zeros(8),
            session_index: 0,
        };
        let r = retrieval_with_vector(vec![0.0; 8]);
        assert!(fuse(&q, &r, 1.5, 1.0).is_err());
        assert!(fuse(&q, &r, 0.5, 0.0).is_err());
    }

    #[test]
    fn context_lists_items_oldest_first_with_labels() {
        let item = |layer, label: &str, text: &str, session, turn| RetrievedItem {
            layer,
            label: label.into(),
            text: text.into(),
            session_index: session,
            turn_index: turn,
            score: 0.0,
            global_score: 0.0,
            tokens: whitespace_tokens(text),
        };
        let mut r = retrieval_with_vector(vec![0.0; 8]);
        r.working = vec![item(Layer::Working, "bob", "second", 2, 1), item(Layer::Working, "ann", "first", 2, 0)];
        r.semantic = vec![item(Layer::Semantic, "fact", "ann likes tea", 0, 0)];
        assert_eq!(assemble_context(&r), "fact: ann likes tea\nann: first\nbob: second");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn gate_is_simplex_and_shift_invariant(
                r in prop::array::uniform3(-1.0f64..1.0),
                beta in 0.01f64..50.0,
                c in -10.0f64..10.0,
            ) {
                let g = softmax_gate(r, beta).unwrap();
                let s: f64 = g.as_array().iter().sum();
                prop_assert!((s - 1.0).abs() <= 1e-9);
                prop_assert!(g.as_array().iter().all(|w| *w >= 0.0));
                let shifted = softmax_gate(r.map(|x| x + c), beta).unwrap();
                for (a, b) in g.as_array().iter().zip(shifted.as_array()) {
                    prop_assert!((a - b).abs() <= 1e-9);
                }
            }

            #[test]
            fn raising_working_relevance_never_lowers_its_weight(
                r in prop::array::uniform3(-1.0f64..1.0),
                bump in 0.0f64..1.0,
                beta in 0.01f64..50.0,
            ) {
                let before = softmax_gate(r, beta).unwrap().gamma_w;
                let after = softmax_gate([r[0] + bump, r[1], r[2]], beta).unwrap().gamma_w;
                prop_assert!(after >= before);
            }

            #[test]
            fn large_beta_concentrates_on_argmax(
                r in prop::array::uniform3(-1.0f64..1.0),
                beta in 0.01f64..10.0,
            ) {
                let mut sorted = r;
                sorted.sort_by(|a, b| b.total_cmp(a));
                prop_assume!(sorted[0] - sorted[1] > 0.3);
                let argmax = |g: GatingWeights| {
                    let a = g.as_array();
                    (0..3).max_by(|i, j| a[*i].total_cmp(&a[*j])).unwrap()
                };
                let sharp = softmax_gate(r, 50.0).unwrap();
                prop_assert!(sharp.as_array()[argmax(sharp)] >= 1.0 - 1e-6);
                prop_assert_eq!(argmax(sharp), argmax(softmax_gate(r, beta).unwrap()));
            }

            #[test]
            fn fuse_respects_entropy_bound(
                values in prop::collection::vec(-1.0f64..1.0, 8..64),
                eps in 0.01f64..3.0,
                mix in 0.0f64..1.0,
            ) {
                let dim = values.len();
                let q = Query { text: String::new(), embedding: Embedding::zeros(dim), session_index: 0 };
                let raw_h = entropy(&values.iter().map(|v| v * (1.0 - mix)).collect::<Vec<_>>());
                let f = fuse(&q, &retrieval_with_vector(values), mix, eps).unwrap();
                prop_assert!(f.entropy <= eps);
                prop_assert!(f.entropy <= raw_h + 1e-12);
            }
        }
    }
}
