//! Pattern-based fact extraction.

use std::collections::BTreeSet;

use super::episodic::SummaryRecord;
use super::session::{Fact, Session};

/// Extracts (subject, predicate, object) facts from a session.
///
/// Recognized sentence shapes: `X is Y`, `X likes|loves|hates Y`,
/// `X lives in Y` and `X works as|at Y`. Annotated facts pass through
/// unchanged with their own confidence. Facts are read from every utterance
/// of the session, not just the ones the summary kept, and duplicates are
/// dropped keeping the first occurrence.
pub fn extract_facts(summary: &SummaryRecord, session: &Session) -> Vec<Fact> {
    debug_assert_eq!(summary.session_index, session.index());
    let mut seen = BTreeSet::new();
    let mut facts = Vec::new();
    for utterance in session.utterances() {
        let annotated = utterance.facts.iter().cloned();
        let matched = utterance.text.split(['.', '!', '?', ';']).filter_map(match_sentence);
        for fact in annotated.chain(matched) {
            let key = (fact.subject.clone(), fact.predicate.clone(), fact.object.clone());
            if seen.insert(key) {
                facts.push(fact);
            }
        }
    }
    facts
}

fn clean(token: &str) -> String {
    token
        .trim_matches(|c: char| !c.is_alphanumeric() && c != '_')
        .to_lowercase()
}

fn match_sentence(sentence: &str) -> Option<Fact> {
    let tokens: Vec<String> = sentence
        .split_whitespace()
        .map(clean)
        .filter(|t| !t.is_empty())
        .collect();

    for i in 1..tokens.len() {
        let (predicate, skip) = match tokens[i].as_str() {
            "is" => ("is", 1),
            "likes" => ("likes", 1),
            "loves" => ("loves", 1),
            "hates" => ("hates", 1),
            "lives" if tokens.get(i + 1).is_some_and(|t| t == "in") => ("lives_in", 2),
            "works" if tokens.get(i + 1).is_some_and(|t| t == "as" || t == "at") => ("works", 2),
            _ => continue,
        };
        let object = &tokens[i + skip..];
        if object.is_empty() {
            return None;
        }
        return Some(Fact::new(tokens[..i].join(" "), predicate, object.join(" "), 1.0));
    }
    None
}
