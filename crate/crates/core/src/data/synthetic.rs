//! Deterministic stand-ins for the first two bAbI task shapes.
//!
//! * one-fact: actors move between locations; "where is <actor>" is
//!   answered by that actor's last move.
//! * two-fact: actors also pick up and drop objects; "where is the <object>"
//!   needs the take/drop statement and the holder's location. Every story
//!   ends with two moves by actors not holding the queried object, so the
//!   last mentioned location carries no information about the answer.

use std::fmt;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::qa::{QaDataset, RawQuestion, RawStory, Split};
use crate::tensor::seeded_rng;
use crate::vocab::Vocabulary;

const ACTORS: &[&str] = &[
    "mary", "john", "sandra", "daniel", "fred", "bill", "julie", "emily", "jeff", "lily",
];
const LOCATIONS: &[&str] = &[
    "kitchen", "garden", "hallway", "bathroom", "bedroom", "office", "cellar", "park", "school", "cinema",
];
const OBJECTS: &[&str] = &["apple", "football", "milk", "key", "book", "box", "pen", "cup"];
const MOVE_VERBS: &[&str] = &["moved", "went", "journeyed", "travelled"];
const TAKE_VERBS: &[&str] = &["got", "grabbed", "took"];
const DROP_VERBS: &[&str] = &["dropped", "discarded", "put"];
const FUNCTION_WORDS: &[&str] = &["to", "the", "down", "where", "is"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TaskKind {
    OneFact,
    TwoFact,
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::OneFact => "one-fact",
            TaskKind::TwoFact => "two-fact",
        })
    }
}

impl FromStr for TaskKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "one-fact" => Ok(TaskKind::OneFact),
            "two-fact" => Ok(TaskKind::TwoFact),
            other => Err(format!("unknown task `{other}` (expected one-fact or two-fact)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub kind: TaskKind,
    pub actors: usize,
    pub locations: usize,
    pub objects: usize,
    pub min_statements: usize,
    pub max_statements: usize,
}

impl SyntheticConfig {
    pub fn one_fact() -> Self {
        Self {
            kind: TaskKind::OneFact,
            actors: 4,
            locations: 6,
            objects: 0,
            min_statements: 2,
            max_statements: 10,
        }
    }

    pub fn two_fact() -> Self {
        Self {
            kind: TaskKind::TwoFact,
            actors: 4,
            locations: 6,
            objects: 4,
            min_statements: 4,
            max_statements: 10,
        }
    }

    pub fn for_kind(kind: TaskKind) -> Self {
        match kind {
            TaskKind::OneFact => Self::one_fact(),
            TaskKind::TwoFact => Self::two_fact(),
        }
    }

    fn clamp(&self) -> Self {
        let mut c = self.clone();
        c.actors = c.actors.clamp(2, ACTORS.len());
        c.locations = c.locations.clamp(2, LOCATIONS.len());
        c.objects = match c.kind {
            TaskKind::OneFact => c.objects.min(OBJECTS.len()),
            TaskKind::TwoFact => c.objects.clamp(1, OBJECTS.len()),
        };
        c.min_statements = c.min_statements.max(1);
        c.max_statements = c.max_statements.max(c.min_statements);
        c
    }

    /// Every word the generator can emit, in a fixed order.
    pub fn lexicon(&self) -> Vec<&'static str> {
        let c = self.clamp();
        let mut words: Vec<&'static str> = Vec::new();
        words.extend(&ACTORS[..c.actors]);
        words.extend(MOVE_VERBS);
        words.extend(FUNCTION_WORDS);
        words.extend(&LOCATIONS[..c.locations]);
        if c.kind == TaskKind::TwoFact {
            words.extend(TAKE_VERBS);
            words.extend(DROP_VERBS);
            words.extend(&OBJECTS[..c.objects]);
        }
        words
    }

    pub fn location_names(&self) -> &'static [&'static str] {
        &LOCATIONS[..self.clamp().locations]
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::build(self.lexicon(), [])
    }
}

fn words(ws: &[&str]) -> Vec<String> {
    ws.iter().map(|w| (*w).to_owned()).collect()
}

/// Raw stories, one question each. Deterministic in `(config, n, seed)`.
pub fn generate_stories(config: &SyntheticConfig, n: usize, seed: u64) -> Vec<RawStory> {
    let c = config.clamp();
    let mut rng = seeded_rng(seed, 0x6e6e);
    (0..n)
        .map(|_| match c.kind {
            TaskKind::OneFact => one_fact_story(&c, &mut rng),
            TaskKind::TwoFact => two_fact_story(&c, &mut rng),
        })
        .collect()
}

/// Generated stories indexed with the generator's fixed vocabulary.
pub fn generate_synthetic_task(config: &SyntheticConfig, n: usize, seed: u64, split: Split) -> QaDataset {
    let raw = generate_stories(config, n, seed);
    QaDataset::from_raw(&raw, &config.vocabulary(), config.kind.to_string(), split)
}

fn move_sentence(actor: &str, location: &str, rng: &mut ChaCha8Rng) -> Vec<String> {
    words(&[actor, MOVE_VERBS.choose(rng).unwrap(), "to", "the", location])
}

fn one_fact_story(c: &SyntheticConfig, rng: &mut ChaCha8Rng) -> RawStory {
    let len = rng.random_range(c.min_statements..=c.max_statements);
    let mut last_move: Vec<Option<(usize, usize)>> = vec![None; c.actors];
    let mut sentences = Vec::with_capacity(len);
    for i in 0..len {
        let a = rng.random_range(0..c.actors);
        let l = rng.random_range(0..c.locations);
        sentences.push(move_sentence(ACTORS[a], LOCATIONS[l], rng));
        last_move[a] = Some((i, l));
    }
    let moved: Vec<usize> = (0..c.actors).filter(|&a| last_move[a].is_some()).collect();
    let a = *moved.choose(rng).unwrap();
    let (support, l) = last_move[a].unwrap();
    RawStory {
        questions: vec![RawQuestion {
            position: sentences.len(),
            words: words(&["where", "is", ACTORS[a]]),
            answer: vec![LOCATIONS[l].to_owned()],
            supporting: vec![support],
        }],
        sentences,
    }
}

#[derive(Clone, Copy)]
enum ObjectState {
    Untouched,
    Held { by: usize, take: usize },
    Dropped { location: usize, drop: usize, mv: usize },
}

fn two_fact_story(c: &SyntheticConfig, rng: &mut ChaCha8Rng) -> RawStory {
    loop {
        if let Some(story) = try_two_fact_story(c, rng) {
            return story;
        }
    }
}

fn try_two_fact_story(c: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Option<RawStory> {
    let len = rng.random_range(c.min_statements..=c.max_statements);
    // (location, statement index of the move)
    let mut at: Vec<Option<(usize, usize)>> = vec![None; c.actors];
    let mut objects = vec![ObjectState::Untouched; c.objects];
    let mut sentences: Vec<Vec<String>> = Vec::with_capacity(len + 2);

    for i in 0..len {
        let placed: Vec<usize> = (0..c.actors).filter(|&a| at[a].is_some()).collect();
        let free: Vec<usize> = (0..c.objects)
            .filter(|&o| !matches!(objects[o], ObjectState::Held { .. }))
            .collect();
        let held: Vec<usize> = (0..c.objects)
            .filter(|&o| matches!(objects[o], ObjectState::Held { .. }))
            .collect();
        let roll: f64 = rng.random();
        if !placed.is_empty() && !free.is_empty() && roll < 0.3 {
            let a = *placed.choose(rng).unwrap();
            let o = *free.choose(rng).unwrap();
            sentences.push(words(&[ACTORS[a], TAKE_VERBS.choose(rng).unwrap(), "the", OBJECTS[o]]));
            objects[o] = ObjectState::Held { by: a, take: i };
        } else if !held.is_empty() && roll >= 0.3 && roll < 0.42 {
            let o = *held.choose(rng).unwrap();
            let ObjectState::Held { by, .. } = objects[o] else {
                unreachable!()
            };
            let (location, mv) = at[by].expect("holders have a location");
            let verb = *DROP_VERBS.choose(rng).unwrap();
            let sentence = if verb == "put" {
                words(&[ACTORS[by], verb, "down", "the", OBJECTS[o]])
            } else {
                words(&[ACTORS[by], verb, "the", OBJECTS[o]])
            };
            sentences.push(sentence);
            objects[o] = ObjectState::Dropped { location, drop: i, mv };
        } else {
            let a = rng.random_range(0..c.actors);
            let l = rng.random_range(0..c.locations);
            sentences.push(move_sentence(ACTORS[a], LOCATIONS[l], rng));
            at[a] = Some((l, i));
        }
    }

    let touched: Vec<usize> = (0..c.objects)
        .filter(|&o| !matches!(objects[o], ObjectState::Untouched))
        .collect();
    let &o = touched.choose(rng)?;
    let holder = match objects[o] {
        ObjectState::Held { by, .. } => Some(by),
        _ => None,
    };
    let others: Vec<usize> = (0..c.actors).filter(|&a| Some(a) != holder).collect();
    for _ in 0..2 {
        let a = *others.choose(rng).unwrap();
        let l = rng.random_range(0..c.locations);
        let i = sentences.len();
        sentences.push(move_sentence(ACTORS[a], LOCATIONS[l], rng));
        at[a] = Some((l, i));
    }

    let (location, mut supporting) = match objects[o] {
        ObjectState::Held { by, take } => {
            let (l, mv) = at[by].expect("holders have a location");
            (l, vec![take, mv])
        }
        ObjectState::Dropped { location, drop, mv } => (location, vec![drop, mv]),
        ObjectState::Untouched => unreachable!(),
    };
    supporting.sort_unstable();
    Some(RawStory {
        questions: vec![RawQuestion {
            position: sentences.len(),
            words: words(&["where", "is", "the", OBJECTS[o]]),
            answer: vec![LOCATIONS[location].to_owned()],
            supporting,
        }],
        sentences,
    })
}

/// Whitespace-tokenized running text of exactly `tokens` tokens, made of
/// two-fact stories with their questions and answers inlined.
pub fn generate_corpus(tokens: usize, seed: u64) -> String {
    let config = SyntheticConfig::two_fact();
    let mut out: Vec<String> = Vec::with_capacity(tokens + 32);
    let mut chunk = 0u64;
    while out.len() < tokens {
        for story in generate_stories(&config, 64, seed.wrapping_mul(1_000_003).wrapping_add(chunk)) {
            for s in &story.sentences {
                out.extend(s.iter().cloned());
                out.push(".".into());
            }
            for q in &story.questions {
                out.extend(q.words.iter().cloned());
                out.push("?".into());
                out.extend(q.answer.iter().cloned());
                out.push(".".into());
            }
            if out.len() >= tokens {
                break;
            }
        }
        chunk += 1;
    }
    out.truncate(tokens);
    out.join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    /// Independent replay: re-derives every answer from the sentence text alone.
    fn replay(story: &RawStory) -> String {
        let mut actor_at: HashMap<&str, &str> = HashMap::new();
        let mut holder: HashMap<&str, &str> = HashMap::new();
        let mut object_at: HashMap<&str, &str> = HashMap::new();
        for s in &story.sentences {
            let w: Vec<&str> = s.iter().map(String::as_str).collect();
            match w[1] {
                v if MOVE_VERBS.contains(&v) => {
                    actor_at.insert(w[0], w[4]);
                }
                v if TAKE_VERBS.contains(&v) => {
                    holder.insert(w[3], w[0]);
                }
                v if DROP_VERBS.contains(&v) => {
                    let obj = *w.last().unwrap();
                    holder.remove(obj);
                    object_at.insert(obj, actor_at[w[0]]);
                }
                other => panic!("unexpected verb {other}"),
            }
        }
        let q = &story.questions[0].words;
        let target = q.last().unwrap().as_str();
        if let Some(a) = holder.get(target) {
            actor_at[a].to_owned()
        } else if let Some(l) = object_at.get(target) {
            (*l).to_owned()
        } else {
            actor_at[target].to_owned()
        }
    }

    #[test]
    fn deterministic_and_self_consistent() {
        for kind in [TaskKind::OneFact, TaskKind::TwoFact] {
            let c = SyntheticConfig::for_kind(kind);
            let a = generate_stories(&c, 1, 17);
            assert_eq!(a, generate_stories(&c, 1, 17));
            assert_eq!(a[0].questions[0].answer, [replay(&a[0])]);
        }
    }

    #[test]
    fn replay_reproduces_every_label() {
        for kind in [TaskKind::OneFact, TaskKind::TwoFact] {
            for story in generate_stories(&SyntheticConfig::for_kind(kind), 500, 3) {
                assert_eq!(story.questions[0].answer, [replay(&story)]);
            }
        }
    }

    #[test]
    fn supporting_ids_point_at_earlier_statements() {
        for story in generate_stories(&SyntheticConfig::two_fact(), 300, 8) {
            let q = &story.questions[0];
            assert_eq!(q.supporting.len(), 2);
            assert!(q.supporting.iter().all(|&s| s < q.position));
            // the second supporting fact mentions the answer location
            assert!(story.sentences[q.supporting[0]]
                .iter()
                .chain(&story.sentences[q.supporting[1]])
                .any(|w| *w == q.answer[0]));
        }
    }

    #[test]
    fn one_fact_answers_are_near_uniform() {
        let c = SyntheticConfig::one_fact();
        let stories = generate_stories(&c, 3000, 5);
        let locations = c.location_names();
        let mut counts = vec![0usize; locations.len()];
        for s in &stories {
            let a = &s.questions[0].answer[0];
            counts[locations.iter().position(|l| l == a).unwrap()] += 1;
        }
        let expected = stories.len() as f64 / locations.len() as f64;
        let chi2: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        // chi-square, 5 degrees of freedom, p = 0.001
        assert!(chi2 < 20.52, "chi2 = {chi2}, counts {counts:?}");
    }

    #[test]
    fn last_location_heuristic_is_near_chance_on_two_fact() {
        let c = SyntheticConfig::two_fact();
        let stories = generate_stories(&c, 3000, 21);
        let locations = c.location_names();
        let hits = stories
            .iter()
            .filter(|s| {
                let last = s
                    .sentences
                    .iter()
                    .flatten()
                    .filter(|w| locations.contains(&w.as_str()))
                    .last()
                    .unwrap();
                *last == s.questions[0].answer[0]
            })
            .count();
        let rate = hits as f64 / stories.len() as f64;
        let chance = 1.0 / locations.len() as f64;
        assert!(rate <= chance + 0.10, "heuristic accuracy {rate}");
    }

    #[test]
    fn dataset_uses_generator_vocabulary() {
        let c = SyntheticConfig::two_fact();
        let ds = generate_synthetic_task(&c, 50, 1, Split::Train);
        let oov = ds.vocab.oov();
        for ex in ds.examples() {
            assert_ne!(ex.answer, oov);
            assert!(ex.story.iter().flatten().all(|&w| w != oov));
        }
        // train and test share indices
        assert_eq!(generate_synthetic_task(&c, 5, 2, Split::Test).vocab, ds.vocab);
    }

    #[test]
    fn corpus_has_requested_size() {
        let text = generate_corpus(5000, 1);
        let n = text.split_whitespace().count();
        assert!((5000..5100).contains(&n));
        assert_eq!(text, generate_corpus(5000, 1));
    }
}
