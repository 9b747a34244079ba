//! bAbI-format stories: parsing, serialization, vocabulary and splits.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::tensor::seeded_rng;
use crate::vocab::Vocabulary;

/// A question as it appears in a task file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawQuestion {
    /// Number of statements preceding the question in its story.
    pub position: usize,
    pub words: Vec<String>,
    /// One entry per answer word (several for list answers).
    pub answer: Vec<String>,
    /// 0-based statement indices of the supporting facts.
    pub supporting: Vec<usize>,
}

impl RawQuestion {
    /// Vocabulary key of the answer; list answers are comma-joined.
    pub fn answer_key(&self) -> String {
        self.answer.join(",")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct RawStory {
    pub sentences: Vec<Vec<String>>,
    pub questions: Vec<RawQuestion>,
}

/// Lowercases and strips sentence punctuation.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|t| {
            t.trim_matches(|c: char| c == '.' || c == '?' || c == '!')
                .to_lowercase()
        })
        .filter(|t| !t.is_empty())
        .collect()
}

/// Parses bAbI v1.1 text. A line number of 1 starts a new story.
pub fn parse_babi(text: &str) -> Result<Vec<RawStory>> {
    let mut stories: Vec<RawStory> = Vec::new();
    // line id -> statement index, within the current story
    let mut statement_of_line: HashMap<usize, usize> = HashMap::new();
    let mut last_id = 0usize;
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (id_str, rest) = line.trim_start().split_once(' ').ok_or_else(|| Error::Parse {
            line: lineno,
            message: "expected `<id> <text>`".into(),
        })?;
        let id: usize = id_str.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("malformed line number `{id_str}`"),
        })?;
        if id == 0 {
            return Err(Error::Parse {
                line: lineno,
                message: "line numbers start at 1".into(),
            });
        }
        if id == 1 {
            stories.push(RawStory::default());
            statement_of_line.clear();
        } else if id <= last_id || stories.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("line number {id} does not continue a story"),
            });
        }
        last_id = id;
        let story = stories.last_mut().expect("story started above");

        let mut fields = rest.split('\t');
        let text_part = fields.next().unwrap_or_default();
        match fields.next() {
            None => {
                statement_of_line.insert(id, story.sentences.len());
                story.sentences.push(tokenize(text_part));
            }
            Some(answer) => {
                if story.sentences.is_empty() {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "question before any statement".into(),
                    });
                }
                let answer: Vec<String> = answer
                    .trim()
                    .split(',')
                    .map(|a| a.trim().to_lowercase())
                    .filter(|a| !a.is_empty())
                    .collect();
                if answer.is_empty() {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "empty answer".into(),
                    });
                }
                let mut supporting = Vec::new();
                for s in fields.next().unwrap_or_default().split_whitespace() {
                    let sid: usize = s.parse().map_err(|_| Error::Parse {
                        line: lineno,
                        message: format!("malformed supporting id `{s}`"),
                    })?;
                    let idx = statement_of_line.get(&sid).ok_or_else(|| Error::Parse {
                        line: lineno,
                        message: format!("supporting id {sid} is not an earlier statement"),
                    })?;
                    supporting.push(*idx);
                }
                story.questions.push(RawQuestion {
                    position: story.sentences.len(),
                    words: tokenize(text_part),
                    answer,
                    supporting,
                });
            }
        }
    }
    Ok(stories)
}

pub fn read_babi(path: impl AsRef<Path>) -> Result<Vec<RawStory>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_babi(&text)
}

/// Writes stories back in bAbI layout (tokens already normalized).
pub fn write_babi(stories: &[RawStory]) -> String {
    let mut out = String::new();
    for story in stories {
        let mut line_of_statement = Vec::with_capacity(story.sentences.len());
        let mut id = 0usize;
        let mut questions = story.questions.iter().peekable();
        for (i, sentence) in story.sentences.iter().enumerate() {
            while let Some(q) = questions.next_if(|q| q.position == i) {
                id += 1;
                write_question(&mut out, id, q, &line_of_statement);
            }
            id += 1;
            line_of_statement.push(id);
            let _ = writeln!(out, "{id} {}.", sentence.join(" "));
        }
        for q in questions {
            id += 1;
            write_question(&mut out, id, q, &line_of_statement);
        }
    }
    out
}

fn write_question(out: &mut String, id: usize, q: &RawQuestion, line_of_statement: &[usize]) {
    let support: Vec<String> = q.supporting.iter().map(|&s| line_of_statement[s].to_string()).collect();
    let _ = writeln!(
        out,
        "{id} {}?\t{}\t{}",
        q.words.join(" "),
        q.answer.join(","),
        support.join(" ")
    );
}

/// Vocabulary from training stories: words by first occurrence, then the
/// null and OOV symbols, then multi-word answer combinations.
pub fn build_vocab(stories: &[RawStory]) -> Vocabulary {
    let mut words: Vec<&str> = Vec::new();
    let mut combos: Vec<String> = Vec::new();
    for story in stories {
        let mut questions = story.questions.iter().peekable();
        for (i, sentence) in story.sentences.iter().enumerate() {
            while let Some(q) = questions.next_if(|q| q.position == i) {
                collect_question(q, &mut words, &mut combos);
            }
            words.extend(sentence.iter().map(String::as_str));
        }
        for q in questions {
            collect_question(q, &mut words, &mut combos);
        }
    }
    Vocabulary::build(words, combos.iter().map(String::as_str))
}

fn collect_question<'a>(q: &'a RawQuestion, words: &mut Vec<&'a str>, combos: &mut Vec<String>) {
    words.extend(q.words.iter().map(String::as_str));
    if q.answer.len() == 1 {
        words.push(&q.answer[0]);
    } else {
        combos.push(q.answer_key());
    }
}

/// Indexed question; supporting ids are kept for inspection only.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Question {
    pub position: usize,
    pub words: Vec<usize>,
    /// OOV index when the answer (or answer combination) is unknown.
    pub answer: usize,
    pub supporting: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Story {
    pub sentences: Vec<Vec<usize>>,
    pub questions: Vec<Question>,
}

/// What training sees of a question: preceding statements, question words
/// and the label. No supporting facts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaExample {
    pub story: Vec<Vec<usize>>,
    pub question: Vec<usize>,
    pub answer: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QaDataset {
    pub stories: Vec<Story>,
    pub vocab: Vocabulary,
    pub task: String,
    pub split: Split,
}

impl QaDataset {
    pub fn from_raw(raw: &[RawStory], vocab: &Vocabulary, task: impl Into<String>, split: Split) -> Self {
        let index = |ws: &[String]| ws.iter().map(|w| vocab.index_or_oov(w)).collect::<Vec<_>>();
        let stories = raw
            .iter()
            .map(|s| Story {
                sentences: s.sentences.iter().map(|x| index(x)).collect(),
                questions: s
                    .questions
                    .iter()
                    .map(|q| Question {
                        position: q.position,
                        words: index(&q.words),
                        answer: vocab.index_or_oov(&q.answer_key()),
                        supporting: q.supporting.clone(),
                    })
                    .collect(),
            })
            .collect();
        Self {
            stories,
            vocab: vocab.clone(),
            task: task.into(),
            split,
        }
    }

    pub fn examples(&self) -> Vec<QaExample> {
        self.stories
            .iter()
            .flat_map(|s| {
                s.questions.iter().map(move |q| QaExample {
                    story: s.sentences[..q.position].to_vec(),
                    question: q.words.clone(),
                    answer: q.answer,
                })
            })
            .collect()
    }

    /// `(story, question)` index pairs in the order of [`QaDataset::examples`].
    pub fn question_refs(&self) -> Vec<(usize, usize)> {
        self.stories
            .iter()
            .enumerate()
            .flat_map(|(s, story)| (0..story.questions.len()).map(move |q| (s, q)))
            .collect()
    }

    pub fn question_count(&self) -> usize {
        self.stories.iter().map(|s| s.questions.len()).sum()
    }
}

/// Story-level hold-out split, deterministic in `seed`; both halves keep
/// the original story order.
pub fn split_validation<T: Clone>(stories: &[T], fraction: f64, seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config("validation_fraction", "must be in [0, 1)"));
    }
    if fraction == 0.0 {
        return Ok((stories.to_vec(), Vec::new()));
    }
    if stories.len() < 10 {
        return Err(Error::EmptyDataset(format!(
            "{} stories are too few for a validation split",
            stories.len()
        )));
    }
    let n_valid = ((fraction * stories.len() as f64).round() as usize).max(1);
    let mut order: Vec<usize> = (0..stories.len()).collect();
    order.shuffle(&mut seeded_rng(seed, 0x5711));
    let mut is_valid = vec![false; stories.len()];
    order[..n_valid].iter().for_each(|&i| is_valid[i] = true);
    let (mut train, mut valid) = (Vec::new(), Vec::new());
    for (s, v) in stories.iter().zip(is_valid) {
        if v {
            valid.push(s.clone());
        } else {
            train.push(s.clone());
        }
    }
    Ok((train, valid))
}
