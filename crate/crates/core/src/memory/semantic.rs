use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::session::Fact;
use crate::embedding::{cosine, Embedder, Embedding};
use crate::error::{Error, Result};

/// Superseded values kept per attribute; older history is dropped.
pub const SUPERSEDED_HISTORY: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeValue {
    pub value: String,
    pub session_index: u64,
    #[serde(default)]
    pub superseded: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityNode {
    pub entity_id: String,
    pub attributes: BTreeMap<String, AttributeValue>,
    pub embedding: Embedding,
    pub importance: f64,
    pub last_updated: u64,
}

impl EntityNode {
    /// `"entity_id attr1 val1 attr2 val2 ..."`, attributes in name order.
    pub fn render(&self) -> String {
        let mut text = self.entity_id.clone();
        for (name, attr) in &self.attributes {
            text.push(' ');
            text.push_str(name);
            text.push(' ');
            text.push_str(&attr.value);
        }
        text
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub session_index: u64,
    pub confidence: f64,
}

/// Entity graph with recency-wins conflict resolution and bounded node count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticGraph {
    nodes: BTreeMap<String, EntityNode>,
    edges: Vec<Edge>,
    capacity_nodes: usize,
}

pub(crate) fn canonical_entity(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

fn canonical_relation(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("_")
}

impl SemanticGraph {
    pub fn new(capacity_nodes: usize) -> Result<Self> {
        if capacity_nodes == 0 {
            return Err(Error::InvalidConfig("semantic capacity must be positive".into()));
        }
        Ok(Self {
            nodes: BTreeMap::new(),
            edges: Vec::new(),
            capacity_nodes,
        })
    }

    pub fn nodes(&self) -> &BTreeMap<String, EntityNode> {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn capacity_nodes(&self) -> usize {
        self.capacity_nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, entity_id: &str) -> Option<&EntityNode> {
        self.nodes.get(&canonical_entity(entity_id))
    }

    /// Current value of `attribute` on `entity_id`, if any.
    pub fn current_value(&self, entity_id: &str, attribute: &str) -> Option<&str> {
        self.node(entity_id)?
            .attributes
            .get(&canonical_relation(attribute))
            .map(|a| a.value.as_str())
    }

    /// Merges `facts` observed at `session_index` into a new graph.
    ///
    /// A fact lands on the node whose id equals its subject; failing that, on
    /// the node most similar to the would-be node text when the similarity
    /// reaches `tau_s` (ties to the smaller id); otherwise on a fresh node.
    /// Conflicting values resolve to the write with the newer session index
    /// (later writes win within one session) and the loser is kept in the
    /// attribute's superseded history. Afterwards the lowest
    /// `(importance, last_updated)` nodes are evicted down to capacity.
    pub fn merge(
        &self,
        facts: &[Fact],
        session_index: u64,
        tau_s: f64,
        embedder: &Embedder,
    ) -> Result<SemanticGraph> {
        if !(0.0..=1.0).contains(&tau_s) {
            return Err(Error::Contract(format!("tau_s must lie in [0, 1], got {tau_s}")));
        }
        let mut graph = self.clone();
        for fact in facts {
            graph.apply(fact, session_index, tau_s, embedder)?;
        }
        graph.evict_to_capacity();
        Ok(graph)
    }

    fn resolve_target(
        &self,
        subject: &str,
        relation: &str,
        object: &str,
        tau_s: f64,
        embedder: &Embedder,
    ) -> Result<String> {
        if self.nodes.contains_key(subject) {
            return Ok(subject.to_string());
        }
        if self.nodes.is_empty() {
            return Ok(subject.to_string());
        }
        let candidate = embedder.embed(&format!("{subject} {relation} {object}"))?;
        let mut best: Option<(&str, f64)> = None;
        for (id, node) in &self.nodes {
            let sim = cosine(&candidate, &node.embedding)?;
            if sim >= tau_s && best.is_none_or(|(_, b)| sim > b) {
                best = Some((id, sim));
            }
        }
        Ok(best.map_or_else(|| subject.to_string(), |(id, _)| id.to_string()))
    }

    fn apply(&mut self, fact: &Fact, session_index: u64, tau_s: f64, embedder: &Embedder) -> Result<()> {
        let subject = canonical_entity(&fact.subject);
        let relation = canonical_relation(&fact.predicate);
        let object = fact.object.split_whitespace().collect::<Vec<_>>().join(" ");
        if subject.is_empty() || relation.is_empty() || object.is_empty() {
            return Ok(());
        }
        let confidence = if fact.confidence.is_finite() {
            fact.confidence.clamp(0.0, 1.0)
        } else {
            0.0
        };

        let target = self.resolve_target(&subject, &relation, &object, tau_s, embedder)?;
        let node = self.nodes.entry(target.clone()).or_insert_with(|| EntityNode {
            entity_id: target.clone(),
            attributes: BTreeMap::new(),
            embedding: Embedding::zeros(embedder.dim()),
            importance: 0.0,
            last_updated: session_index,
        });

        let mut retired = None;
        let current = match node.attributes.get_mut(&relation) {
            None => {
                node.attributes.insert(
                    relation.clone(),
                    AttributeValue {
                        value: object.clone(),
                        session_index,
                        superseded: Vec::new(),
                    },
                );
                true
            }
            Some(attr) if attr.value == object => {
                if session_index <= attr.session_index {
                    // identical restatement: nothing to write
                    return Ok(());
                }
                attr.session_index = session_index;
                true
            }
            Some(attr) if session_index >= attr.session_index => {
                let old = std::mem::replace(&mut attr.value, object.clone());
                push_history(&mut attr.superseded, old.clone());
                attr.session_index = session_index;
                retired = Some(old);
                true
            }
            Some(attr) => {
                // a stale write: remember it, keep the newer value current
                if attr.superseded.contains(&object) {
                    return Ok(());
                }
                push_history(&mut attr.superseded, object.clone());
                false
            }
        };

        node.importance += 1.0;
        node.last_updated = node.last_updated.max(session_index);
        node.embedding = embedder.embed(&node.render())?;

        if let Some(old) = retired {
            self.edges
                .retain(|e| !(e.subject == target && e.relation == relation && e.object == old));
        }
        if current {
            match self
                .edges
                .iter_mut()
                .find(|e| e.subject == target && e.relation == relation && e.object == object)
            {
                Some(edge) => {
                    edge.session_index = session_index;
                    edge.confidence = confidence;
                }
                None => self.edges.push(Edge {
                    subject: target,
                    relation,
                    object,
                    session_index,
                    confidence,
                }),
            }
        }
        Ok(())
    }

    fn evict_to_capacity(&mut self) {
        while self.nodes.len() > self.capacity_nodes {
            let victim = self
                .nodes
                .values()
                .min_by(|a, b| {
                    a.importance
                        .total_cmp(&b.importance)
                        .then(a.last_updated.cmp(&b.last_updated))
                        .then_with(|| a.entity_id.cmp(&b.entity_id))
                })
                .map(|n| n.entity_id.clone())
                .expect("over capacity implies non-empty");
            self.nodes.remove(&victim);
            self.edges.retain(|e| e.subject != victim);
        }
    }
}

fn push_history(history: &mut Vec<String>, value: String) {
    history.retain(|v| *v != value);
    history.push(value);
    if history.len() > SUPERSEDED_HISTORY {
        history.remove(0);
    }
}
