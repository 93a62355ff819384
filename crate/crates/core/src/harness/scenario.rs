//! Seeded synthetic multi-session dialogues with fact probes.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{Fact, Session, Utterance};

/// Chance that a period-0 fact is restated in any later session.
pub const RESTATEMENT_PROBABILITY: f64 = 0.1;

const FIRST_NAMES: &[&str] = &[
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy", "mallory",
    "niaj", "olivia", "peggy", "rupert", "sybil", "trent", "victor", "walter", "xavier", "yolanda",
    "zelda", "arthur", "bianca", "cedric", "delia", "edgar", "fiona", "gideon", "harriet",
    "ingrid", "jasper",
];

const SURNAMES: &[&str] = &[
    "ash", "birch", "cedar", "dunn", "elm", "flint", "gale", "holt", "ives", "jute", "knox",
    "lark", "moss", "nash", "oakes", "pike", "quill", "reed", "stone", "thorn", "umber", "vane",
    "wren", "yarrow",
];

/// Attribute name, values stated in dialogue, values reserved for false probes.
const ATTRIBUTES: &[(&str, &[&str], &[&str])] = &[
    (
        "lives_in",
        &["paris", "london", "tokyo", "berlin", "madrid", "lisbon", "vienna", "prague", "dublin", "athens", "cairo", "lima"],
        &["reykjavik", "ulaanbaatar", "timbuktu", "ouagadougou"],
    ),
    (
        "works",
        &["baker", "pilot", "nurse", "teacher", "plumber", "lawyer", "farmer", "chemist", "architect", "dentist", "jeweler", "sailor"],
        &["astronaut", "falconer", "cartographer", "taxidermist"],
    ),
    (
        "likes",
        &["jazz", "chess", "tennis", "poetry", "cycling", "gardening", "painting", "skiing", "pottery", "karaoke"],
        &["curling", "fencing", "bouldering", "dressage"],
    ),
    (
        "hates",
        &["spiders", "traffic", "mornings", "thunder", "crowds", "mushrooms", "paperwork", "queues"],
        &["bagpipes", "mosquitoes", "accordions"],
    ),
    (
        "owns",
        &["bicycle", "piano", "canoe", "telescope", "parrot", "tractor", "violin", "kayak"],
        &["zeppelin", "submarine", "harpsichord"],
    ),
    (
        "drinks",
        &["espresso", "matcha", "kombucha", "lemonade", "cocoa", "chai"],
        &["absinthe", "mezcal", "kvass"],
    ),
    (
        "speaks",
        &["welsh", "basque", "tagalog", "swahili", "icelandic", "catalan"],
        &["esperanto", "klingon", "quenya"],
    ),
    (
        "collects",
        &["stamps", "coins", "vinyl", "fossils", "postcards", "seashells"],
        &["meteorites", "netsuke", "thimbles"],
    ),
];

const DISTRACTOR_SUBJECTS: &[&str] = &["we", "you", "they", "the neighbours", "my cousin", "our team"];
const DISTRACTOR_VERBS: &[&str] = &[
    "talked about", "planned", "remembered", "argued over", "laughed at", "wrote about",
];
const DISTRACTOR_OBJECTS: &[&str] = &[
    "the weekend", "a long movie", "the old bridge", "some recipes", "the late train",
    "a board game", "the garden fence", "a funny podcast", "the rainy forecast", "an odd dream",
];
const DISTRACTOR_TAILS: &[&str] = &["yesterday", "last night", "for hours", "again", "briefly", "at lunch"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Persona {
    pub name: String,
    /// (attribute, value) pairs stated in period 0.
    pub facts: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProbeKind {
    TrueFact,
    FalseFact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    /// Session after which the probe is asked.
    pub period: u64,
    pub question: String,
    pub subject: String,
    pub attribute: String,
    pub gold_value: String,
    pub kind: ProbeKind,
    /// Period the fact was stated in; `None` for false probes.
    pub introduced_at: Option<u64>,
}

impl Probe {
    /// Periods elapsed since the fact was stated.
    pub fn gap(&self) -> Option<u64> {
        self.introduced_at.map(|t| self.period - t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioParams {
    pub n_personas: usize,
    pub periods: usize,
    pub facts_per_persona: usize,
    pub distractors_per_session: usize,
    pub seed: u64,
    /// Pair personas under a shared first name ("alice ash", "alice birch")
    /// with the same attribute set. False probes then ask for the twin's
    /// value, which is stated in dialogue but never about the probed persona.
    pub confusable_names: bool,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            n_personas: 20,
            periods: 8,
            facts_per_persona: 3,
            distractors_per_session: 12,
            seed: 0,
            confusable_names: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub personas: Vec<Persona>,
    pub periods: usize,
    pub sessions: Vec<Session>,
    pub probes: Vec<Probe>,
    pub seed: u64,
}

/// Scenario with default settings for everything not named here.
pub fn generate_scenario(
    n_personas: usize,
    periods: usize,
    facts_per_persona: usize,
    distractors_per_session: usize,
    seed: u64,
) -> Result<Scenario> {
    ScenarioParams {
        n_personas,
        periods,
        facts_per_persona,
        distractors_per_session,
        seed,
        confusable_names: false,
    }
    .generate()
}

fn persona_names(n: usize, confusable: bool) -> Vec<String> {
    (0..n)
        .map(|i| {
            if confusable {
                let first = FIRST_NAMES[(i / 2) % FIRST_NAMES.len()];
                let surname = SURNAMES[i % SURNAMES.len()];
                let round = i / (2 * FIRST_NAMES.len());
                if round == 0 {
                    format!("{first} {surname}")
                } else {
                    format!("{first} {surname}{round}")
                }
            } else {
                let first = FIRST_NAMES[i % FIRST_NAMES.len()];
                match i / FIRST_NAMES.len() {
                    0 => first.to_string(),
                    round => format!("{first}{round}"),
                }
            }
        })
        .collect()
}

fn distractor(rng: &mut ChaCha8Rng) -> String {
    format!(
        "{} {} {} {}",
        DISTRACTOR_SUBJECTS.choose(rng).unwrap(),
        DISTRACTOR_VERBS.choose(rng).unwrap(),
        DISTRACTOR_OBJECTS.choose(rng).unwrap(),
        DISTRACTOR_TAILS.choose(rng).unwrap()
    )
}

fn values_for(attribute: &str) -> (&'static [&'static str], &'static [&'static str]) {
    let (_, stated, reserved) = ATTRIBUTES
        .iter()
        .find(|(name, _, _)| *name == attribute)
        .expect("attribute comes from the table");
    (stated, reserved)
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_personas == 0 {
            return Err(Error::InvalidConfig("need at least one persona".into()));
        }
        if self.periods < 2 {
            return Err(Error::InvalidConfig("need at least two periods".into()));
        }
        if self.facts_per_persona == 0 || self.facts_per_persona > ATTRIBUTES.len() {
            return Err(Error::InvalidConfig(format!(
                "facts_per_persona must lie in 1..={}",
                ATTRIBUTES.len()
            )));
        }
        Ok(())
    }

    pub fn generate(&self) -> Result<Scenario> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let names = persona_names(self.n_personas, self.confusable_names);

        let mut personas: Vec<Persona> = Vec::with_capacity(self.n_personas);
        for (i, name) in names.into_iter().enumerate() {
            let twin = (self.confusable_names && i % 2 == 1).then(|| &personas[i - 1]);
            let attributes: Vec<&str> = match twin {
                Some(t) => t.facts.iter().map(|(a, _)| a.as_str()).collect(),
                None => {
                    let mut all: Vec<&str> = ATTRIBUTES.iter().map(|(a, _, _)| *a).collect();
                    all.shuffle(&mut rng);
                    all.truncate(self.facts_per_persona);
                    all
                }
            };
            let mut facts = Vec::with_capacity(attributes.len());
            for attribute in attributes {
                let (stated, _) = values_for(attribute);
                let taken = twin.and_then(|t| t.facts.iter().find(|(a, _)| a == attribute)).map(|(_, v)| v);
                let value = loop {
                    let v = *stated.choose(&mut rng).unwrap();
                    if taken.is_none_or(|t| t != v) {
                        break v;
                    }
                };
                facts.push((attribute.to_string(), value.to_string()));
            }
            personas.push(Persona { name, facts });
        }

        let sessions = (0..self.periods as u64)
            .map(|t| self.session(t, &personas, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let probes = self.probes(&personas, &mut rng);

        Ok(Scenario {
            personas,
            periods: self.periods,
            sessions,
            probes,
            seed: self.seed,
        })
    }

    /// Fact statements first, distractor chatter after.
    fn session(&self, t: u64, personas: &[Persona], rng: &mut ChaCha8Rng) -> Result<Session> {
        let mut utterances = Vec::new();
        let mut turn = 0u64;
        for persona in personas {
            for (attribute, value) in &persona.facts {
                if t == 0 || rng.random_bool(RESTATEMENT_PROBABILITY) {
                    let text = format!("{} {attribute} {value}", persona.name);
                    utterances.push(
                        Utterance::new(t, turn, persona.name.clone(), text)
                            .with_facts(vec![Fact::new(&persona.name, attribute, value, 1.0)]),
                    );
                    turn += 1;
                }
            }
        }
        let chatter = self.distractors_per_session.max(usize::from(utterances.is_empty()));
        for i in 0..chatter {
            let speaker = if i % 2 == 0 { "user" } else { "assistant" };
            utterances.push(Utterance::new(t, turn, speaker, distractor(rng)));
            turn += 1;
        }
        Session::new(t, utterances)
    }

    fn probes(&self, personas: &[Persona], rng: &mut ChaCha8Rng) -> Vec<Probe> {
        let mut probes = Vec::new();
        for period in 1..self.periods as u64 {
            for persona in personas {
                for (attribute, value) in &persona.facts {
                    probes.push(Probe {
                        period,
                        question: format!("what about {} {attribute}", persona.name),
                        subject: persona.name.clone(),
                        attribute: attribute.clone(),
                        gold_value: value.clone(),
                        kind: ProbeKind::TrueFact,
                        introduced_at: Some(0),
                    });
                }
            }
            for (i, persona) in personas.iter().enumerate() {
                let (attribute, own) = persona.facts.choose(rng).unwrap();
                let twin = self.confusable_names.then(|| personas.get(i ^ 1)).flatten();
                let twin_value = twin
                    .and_then(|t| t.facts.iter().find(|(a, _)| a == attribute))
                    .map(|(_, v)| v.clone())
                    .filter(|v| v != own);
                let gold_value = twin_value.unwrap_or_else(|| {
                    let (_, reserved) = values_for(attribute);
                    reserved.choose(rng).unwrap().to_string()
                });
                probes.push(Probe {
                    period,
                    question: format!("what about {} {attribute}", persona.name),
                    subject: persona.name.clone(),
                    attribute: attribute.clone(),
                    gold_value,
                    kind: ProbeKind::FalseFact,
                    introduced_at: None,
                });
            }
        }
        probes
    }
}
