use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A structured (subject, predicate, object) annotation with confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fact {
    #[serde(rename = "s")]
    pub subject: String,
    #[serde(rename = "p")]
    pub predicate: String,
    #[serde(rename = "o")]
    pub object: String,
    #[serde(rename = "c", default = "full_confidence")]
    pub confidence: f64,
}

fn full_confidence() -> f64 {
    1.0
}

impl Fact {
    pub fn new(
        subject: impl Into<String>,
        predicate: impl Into<String>,
        object: impl Into<String>,
        confidence: f64,
    ) -> Self {
        Self {
            subject: subject.into(),
            predicate: predicate.into(),
            object: object.into(),
            confidence,
        }
    }
}

pub fn whitespace_tokens(text: &str) -> usize {
    text.split_whitespace().count()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub session_index: u64,
    pub turn_index: u64,
    pub speaker: String,
    pub text: String,
    pub token_count: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub facts: Vec<Fact>,
}

impl Utterance {
    pub fn new(
        session_index: u64,
        turn_index: u64,
        speaker: impl Into<String>,
        text: impl Into<String>,
    ) -> Self {
        let text = text.into();
        Self {
            session_index,
            turn_index,
            speaker: speaker.into(),
            token_count: whitespace_tokens(&text),
            text,
            facts: Vec::new(),
        }
    }

    pub fn with_facts(mut self, facts: Vec<Fact>) -> Self {
        self.facts = facts;
        self
    }
}

/// One dialogue session: a non-empty, turn-ordered list of utterances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    index: u64,
    utterances: Vec<Utterance>,
}

impl Session {
    pub fn new(index: u64, utterances: Vec<Utterance>) -> Result<Self> {
        if utterances.is_empty() {
            return Err(Error::Contract(format!("session {index} has no utterances")));
        }
        let mut prev_turn = None;
        for u in &utterances {
            if u.session_index != index {
                return Err(Error::Contract(format!(
                    "utterance turn {} carries session index {} inside session {index}",
                    u.turn_index, u.session_index
                )));
            }
            if prev_turn.is_some_and(|p| u.turn_index <= p) {
                return Err(Error::Contract(format!(
                    "session {index}: turn indices must strictly increase (turn {})",
                    u.turn_index
                )));
            }
            if u.token_count == 0 || u.token_count != whitespace_tokens(&u.text) {
                return Err(Error::Contract(format!(
                    "session {index} turn {}: token_count must equal a positive whitespace token count",
                    u.turn_index
                )));
            }
            prev_turn = Some(u.turn_index);
        }
        Ok(Self { index, utterances })
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn token_count(&self) -> usize {
        self.utterances.iter().map(|u| u.token_count).sum()
    }

    pub fn last_text(&self) -> &str {
        &self.utterances.last().expect("sessions are non-empty").text
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct UtteranceRecord {
    turn: u64,
    speaker: String,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    facts: Option<Vec<Fact>>,
}

/// One line of the session JSONL format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionRecord {
    index: u64,
    utterances: Vec<UtteranceRecord>,
}

impl TryFrom<SessionRecord> for Session {
    type Error = Error;

    fn try_from(record: SessionRecord) -> Result<Self> {
        let index = record.index;
        let utterances = record
            .utterances
            .into_iter()
            .map(|u| {
                Utterance::new(index, u.turn, u.speaker, u.text).with_facts(u.facts.unwrap_or_default())
            })
            .collect();
        Session::new(index, utterances)
    }
}

impl From<&Session> for SessionRecord {
    fn from(session: &Session) -> Self {
        SessionRecord {
            index: session.index,
            utterances: session
                .utterances
                .iter()
                .map(|u| UtteranceRecord {
                    turn: u.turn_index,
                    speaker: u.speaker.clone(),
                    text: u.text.clone(),
                    facts: (!u.facts.is_empty()).then(|| u.facts.clone()),
                })
                .collect(),
        }
    }
}

/// Reads sessions from JSONL, one session per line. Blank lines are skipped.
pub fn read_sessions_jsonl(reader: impl BufRead) -> Result<Vec<Session>> {
    let mut sessions = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SessionRecord = serde_json::from_str(&line).map_err(|e| {
            Error::Contract(format!("sessions jsonl line {}: {e}", lineno + 1))
        })?;
        sessions.push(Session::try_from(record)?);
    }
    Ok(sessions)
}

pub fn write_sessions_jsonl(mut writer: impl std::io::Write, sessions: &[Session]) -> Result<()> {
    for session in sessions {
        serde_json::to_writer(&mut writer, &SessionRecord::from(session))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_count_is_whitespace_split() {
        let u = Utterance::new(0, 0, "a", "  alice   likes jazz ");
        assert_eq!(u.token_count, 3);
    }

    #[test]
    fn session_invariants() {
        assert!(Session::new(0, vec![]).is_err());
        let bad_turns = vec![
            Utterance::new(0, 1, "a", "x"),
            Utterance::new(0, 1, "a", "y"),
        ];
        assert!(Session::new(0, bad_turns).is_err());
        let bad_index = vec![Utterance::new(1, 0, "a", "x")];
        assert!(Session::new(0, bad_index).is_err());
        assert!(Session::new(0, vec![Utterance::new(0, 0, "a", "   ")]).is_err());
        assert!(Session::new(0, vec![Utterance::new(0, 3, "a", "x")]).is_ok());
    }

    #[test]
    fn jsonl_parses_facts_and_round_trips() {
        let line = r#"{"index": 2, "utterances": [{"turn": 0, "speaker": "user", "text": "bob moved", "facts": [{"s":"bob","p":"lives_in","o":"paris","c":0.9}]}, {"turn": 1, "speaker": "bot", "text": "ok"}]}"#;
        let sessions = read_sessions_jsonl(format!("{line}\n\n").as_bytes()).unwrap();
        assert_eq!(sessions.len(), 1);
        let s = &sessions[0];
        assert_eq!(s.index(), 2);
        assert_eq!(s.utterances()[0].facts, vec![Fact::new("bob", "lives_in", "paris", 0.9)]);
        assert_eq!(s.utterances()[1].session_index, 2);

        let mut buf = Vec::new();
        write_sessions_jsonl(&mut buf, &sessions).unwrap();
        assert_eq!(read_sessions_jsonl(buf.as_slice()).unwrap(), sessions);
    }

    #[test]
    fn jsonl_reports_bad_line() {
        let err = read_sessions_jsonl("{\"index\": 0}\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }
}
