//! Per-session orchestration: consolidate, gate, retrieve, fuse, respond and
//! record drift.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::embedding::{Embedder, EmbedderConfig};
use crate::error::{Error, Result};
use crate::memory::{
    extract_facts, summarize, EpisodicMemory, MemoryState, Renormalize, SemanticGraph, Session,
    WorkingMemory,
};
use crate::retention::{drift, DriftReport};
use crate::retrieval::{fuse, gate, retrieve_with_weights, FusedState, GatingWeights, Query, RetrievalResult};

/// Which layers consolidate and serve retrieval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayerSwitches {
    pub working: bool,
    pub episodic: bool,
    pub semantic: bool,
}

impl Default for LayerSwitches {
    fn default() -> Self {
        Self {
            working: true,
            episodic: true,
            semantic: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    /// Working-memory window in utterances.
    pub k: usize,
    /// Working-memory token capacity.
    pub c_w: usize,
    /// Episodic summary log capacity.
    pub c_e: usize,
    /// Semantic graph node capacity.
    pub c_s: usize,
    /// Episodic retention decay.
    pub alpha: f64,
    /// Gating temperature.
    pub beta: f64,
    /// Weight of the retention-drift loss in the tuning objective.
    pub lambda: f64,
    /// Entity merge similarity threshold.
    pub tau_s: f64,
    /// Entropy bound on the fused vector (nats).
    pub epsilon: f64,
    /// Share of the query in the fused vector.
    pub mix: f64,
    pub top_j: usize,
    pub token_budget: usize,
    pub summary_m: usize,
    pub embedder: EmbedderConfig,
    pub seed: u64,
    pub layers: LayerSwitches,
    pub uniform_gating: bool,
    pub episodic_renormalize: Renormalize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k: 16,
            c_w: 512,
            c_e: 32,
            c_s: 128,
            alpha: 0.7,
            beta: 5.0,
            lambda: 0.1,
            tau_s: 0.90,
            epsilon: 2.0,
            mix: 0.5,
            top_j: 4,
            token_budget: 512,
            summary_m: 3,
            embedder: EmbedderConfig::default(),
            seed: 0,
            layers: LayerSwitches::default(),
            uniform_gating: false,
            episodic_renormalize: Renormalize::AboveUnit,
        }
    }
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidConfig(msg()))
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        check(self.k >= 1, || "k must be >= 1".into())?;
        check(self.c_w >= 1, || "c_w must be >= 1".into())?;
        check(self.c_e >= 1, || "c_e must be >= 1".into())?;
        check(self.c_s >= 1, || "c_s must be >= 1".into())?;
        check((0.0..=1.0).contains(&self.alpha), || format!("alpha {} outside [0, 1]", self.alpha))?;
        check(self.beta.is_finite() && self.beta > 0.0, || {
            format!("beta {} must be finite and > 0", self.beta)
        })?;
        check(self.lambda.is_finite() && self.lambda >= 0.0, || {
            format!("lambda {} must be finite and >= 0", self.lambda)
        })?;
        check((0.0..=1.0).contains(&self.tau_s), || format!("tau_s {} outside [0, 1]", self.tau_s))?;
        check(self.epsilon.is_finite() && self.epsilon > 0.0, || {
            format!("epsilon {} must be finite and > 0", self.epsilon)
        })?;
        check((0.0..=1.0).contains(&self.mix), || format!("mix {} outside [0, 1]", self.mix))?;
        check(self.top_j >= 1, || "top_j must be >= 1".into())?;
        check(self.token_budget >= 1, || "token_budget must be >= 1".into())?;
        check(self.summary_m >= 1, || "summary_m must be >= 1".into())?;
        self.embedder.validate()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: EngineConfig =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Produces a reply from the fused state.
pub trait Responder: Send + Sync {
    fn generate(&self, fused: &FusedState, query: &Query) -> String;
}

/// Echoes the admitted memory items and the query.
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateResponder;

impl Responder for TemplateResponder {
    fn generate(&self, fused: &FusedState, query: &Query) -> String {
        format!(
            "Based on memory: {} | answer to: {}",
            fused.context_text.replace('\n', "; "),
            query.text
        )
    }
}

/// Retrieval, fusion and reply for one query against a fixed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub retrieval: RetrievalResult,
    pub fused: FusedState,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub state: MemoryState,
    pub retrieval: RetrievalResult,
    pub fused: FusedState,
    pub drift: DriftReport,
    pub response: String,
    /// Context tokens over all ingested history tokens, capped at 1.
    pub context_usage: f64,
}

/// A validated configuration plus its embedder.
#[derive(Debug, Clone)]
pub struct Engine {
    config: EngineConfig,
    embedder: Embedder,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self> {
        config.validate()?;
        let embedder = Embedder::new(config.embedder.clone())?;
        Ok(Self { config, embedder })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn embedder(&self) -> &Embedder {
        &self.embedder
    }

    /// The all-empty state every run starts from.
    pub fn fresh_state(&self) -> Result<MemoryState> {
        let cfg = &self.config;
        Ok(MemoryState::new(
            WorkingMemory::new(cfg.k, cfg.c_w)?,
            EpisodicMemory::new(cfg.embedder.dim, cfg.alpha, cfg.c_e, cfg.episodic_renormalize)?,
            SemanticGraph::new(cfg.c_s)?,
        ))
    }

    pub fn query(&self, text: impl Into<String>, session_index: u64) -> Result<Query> {
        Query::new(text, session_index, &self.embedder)
    }

    /// Ingests one session into a new state without answering anything.
    pub fn consolidate(&self, state: &MemoryState, session: &Session) -> Result<MemoryState> {
        let expected = state.next_session_index();
        if session.index() != expected {
            return Err(Error::Contract(format!(
                "expected session {expected}, got {}",
                session.index()
            )));
        }
        let cfg = &self.config;
        let mut next = state.clone();

        if cfg.layers.working {
            next.working = state.working.update(session, &self.embedder)?;
        }
        if cfg.layers.episodic || cfg.layers.semantic {
            let summary = summarize(session, cfg.summary_m, &self.embedder)?;
            if cfg.layers.semantic {
                let facts = extract_facts(&summary, session);
                next.semantic =
                    state
                        .semantic
                        .merge(&facts, session.index(), cfg.tau_s, &self.embedder)?;
            }
            if cfg.layers.episodic {
                next.episodic = state.episodic.update(summary)?;
            }
        }
        next.session_cursor = Some(session.index());
        next.history_tokens += session.token_count() as u64;
        Ok(next)
    }

    pub fn weights(&self, query: &Query, state: &MemoryState) -> Result<GatingWeights> {
        if self.config.uniform_gating {
            Ok(GatingWeights::uniform(self.config.beta))
        } else {
            gate(query, state, self.config.beta)
        }
    }

    /// Gate, retrieve, fuse and respond against `state`.
    pub fn answer(&self, state: &MemoryState, query: &Query, responder: &dyn Responder) -> Result<Answer> {
        let cfg = &self.config;
        let weights = self.weights(query, state)?;
        let retrieval = retrieve_with_weights(query, state, weights, cfg.top_j, cfg.token_budget)?;
        let fused = fuse(query, &retrieval, cfg.mix, cfg.epsilon)?;
        let response = responder.generate(&fused, query);
        Ok(Answer {
            retrieval,
            fused,
            response,
        })
    }

    /// One full session step. `query` defaults to the session's last utterance.
    pub fn step(
        &self,
        state: &MemoryState,
        session: &Session,
        query: Option<&Query>,
        responder: &dyn Responder,
    ) -> Result<StepOutput> {
        let next = self.consolidate(state, session)?;
        let default_query;
        let query = match query {
            Some(q) => q,
            None => {
                default_query = self.query(session.last_text(), session.index())?;
                &default_query
            }
        };
        let Answer {
            retrieval,
            fused,
            response,
        } = self.answer(&next, query, responder)?;
        let drift = drift(&state.semantic, &next.semantic)?;
        let context_usage = if next.history_tokens == 0 {
            0.0
        } else {
            (fused.context_tokens as f64 / next.history_tokens as f64).min(1.0)
        };
        Ok(StepOutput {
            state: next,
            retrieval,
            fused,
            drift,
            response,
            context_usage,
        })
    }

    /// Folds [`Engine::step`] over `sessions` from the empty state.
    pub fn run(
        &self,
        sessions: &[Session],
        queries: &BTreeMap<u64, Query>,
        responder: &dyn Responder,
    ) -> Result<Vec<StepOutput>> {
        let mut state = self.fresh_state()?;
        let mut outputs = Vec::with_capacity(sessions.len());
        for session in sessions {
            let out = self
                .step(&state, session, queries.get(&session.index()), responder)
                .map_err(|e| Error::Step {
                    index: session.index(),
                    source: Box::new(e),
                })?;
            state = out.state.clone();
            outputs.push(out);
        }
        Ok(outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::cosine;
    use crate::memory::{Fact, Utterance};
    use crate::retrieval::{layer_representation, Layer};

    fn engine() -> Engine {
        Engine::new(EngineConfig::default()).unwrap()
    }

    fn session(index: u64, texts: &[&str]) -> Session {
        let utterances = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Utterance::new(index, i as u64, "user", *t))
            .collect();
        Session::new(index, utterances).unwrap()
    }

    #[test]
    fn default_config_is_valid_and_json_round_trips() {
        let cfg = EngineConfig::default();
        cfg.validate().unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(EngineConfig::from_json(&text).unwrap(), cfg);
        let partial = EngineConfig::from_json(r#"{"k": 3, "alpha": 0.2}"#).unwrap();
        assert_eq!(partial.k, 3);
        assert_eq!(partial.beta, cfg.beta);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = [
            r#"{"alpha": 1.5}"#,
            r#"{"beta": 0}"#,
            r#"{"k": 0}"#,
            r#"{"epsilon": -1}"#,
            r#"{"tau_s": 2}"#,
            r#"{"unknown_field": 1}"#,
        ];
        for text in bad {
            assert!(matches!(EngineConfig::from_json(text), Err(Error::InvalidConfig(_))), "{text}");
        }
    }

    #[test]
    fn single_utterance_puts_most_weight_on_working_layer() {
        let e = engine();
        let s = session(0, &["alice likes jazz and late night radio"]);
        let q = e.query("alice likes jazz and late night radio", 0).unwrap();
        let out = e.step(&e.fresh_state().unwrap(), &s, Some(&q), &TemplateResponder).unwrap();

        let r: Vec<f64> = Layer::ALL
            .iter()
            .map(|l| cosine(&q.embedding, &layer_representation(&out.state, *l).unwrap()).unwrap())
            .collect();
        assert!((r[0] - 1.0).abs() < 1e-12);
        assert!(r[0] >= r[1] && r[0] >= r[2]);
        let w = out.retrieval.weights;
        assert!(w.gamma_w >= w.gamma_e && w.gamma_w >= w.gamma_s);
        assert!(out.response.starts_with("Based on memory: "));
        assert!(out.response.ends_with("| answer to: alice likes jazz and late night radio"));
    }

    #[test]
    fn step_is_deterministic_and_does_not_mutate_input() {
        let e = engine();
        let state = e.fresh_state().unwrap();
        let s = session(0, &["bob lives in oslo", "the tram was late"]);
        let a = e.step(&state, &s, None, &TemplateResponder).unwrap();
        let b = e.step(&state, &s, None, &TemplateResponder).unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert_eq!(state, e.fresh_state().unwrap());
    }

    #[test]
    fn attribute_update_drift_equals_embedding_shift() {
        let e = engine();
        let s0 = session(0, &["ann lives in rome"]);
        let s1 = Session::new(
            1,
            vec![Utterance::new(1, 0, "user", "moving news")
                .with_facts(vec![Fact::new("ann", "lives_in", "oslo", 1.0)])],
        )
        .unwrap();
        let out0 = e.step(&e.fresh_state().unwrap(), &s0, None, &TemplateResponder).unwrap();
        let out1 = e.step(&out0.state, &s1, None, &TemplateResponder).unwrap();

        // Oracle: embed the node text before and after by hand.
        let before = e.embedder().embed("ann lives_in rome").unwrap();
        let after = e.embedder().embed("ann lives_in oslo").unwrap();
        let shift: f64 = before
            .values()
            .iter()
            .zip(after.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        assert!(shift > 0.0);
        assert!((out1.drift.total - shift).abs() < 1e-12);
        assert_eq!(out1.drift.per_entity.keys().collect::<Vec<_>>(), ["ann"]);
    }

    #[test]
    fn out_of_order_session_is_contract_error() {
        let e = engine();
        let err = e
            .step(&e.fresh_state().unwrap(), &session(3, &["x"]), None, &TemplateResponder)
            .unwrap_err();
        assert!(matches!(err, Error::Contract(_)));
    }

    #[test]
    fn run_counts_and_cursor() {
        let e = engine();
        assert!(e.run(&[], &BTreeMap::new(), &TemplateResponder).unwrap().is_empty());
        let sessions: Vec<Session> = (0..4).map(|t| session(t, &["a b c", "d e"])).collect();
        let outs = e.run(&sessions, &BTreeMap::new(), &TemplateResponder).unwrap();
        assert_eq!(outs.len(), 4);
        assert_eq!(outs.last().unwrap().state.session_cursor, Some(3));
        assert_eq!(outs.last().unwrap().state.history_tokens, 20);
    }

    #[test]
    fn run_reports_failing_index() {
        let e = engine();
        let sessions = vec![session(0, &["a"]), session(2, &["b"])];
        match e.run(&sessions, &BTreeMap::new(), &TemplateResponder) {
            Err(Error::Step { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn disabled_layers_stay_empty() {
        let cfg = EngineConfig {
            layers: LayerSwitches {
                working: true,
                episodic: false,
                semantic: false,
            },
            ..EngineConfig::default()
        };
        let e = Engine::new(cfg).unwrap();
        let outs = e
            .run(&[session(0, &["ann likes tea"])], &BTreeMap::new(), &TemplateResponder)
            .unwrap();
        let st = &outs[0].state;
        assert!(st.semantic.is_empty());
        assert!(st.episodic.log().is_empty());
        assert!(st.episodic.state().is_zero());
        assert_eq!(st.working.entries().len(), 1);
    }

    #[test]
    fn uniform_gating_ignores_relevance() {
        let cfg = EngineConfig {
            uniform_gating: true,
            ..EngineConfig::default()
        };
        let e = Engine::new(cfg).unwrap();
        let outs = e
            .run(&[session(0, &["ann likes tea"])], &BTreeMap::new(), &TemplateResponder)
            .unwrap();
        assert_eq!(outs[0].retrieval.weights.as_array(), [1.0 / 3.0; 3]);
    }
}
