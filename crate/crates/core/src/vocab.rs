//! Word <-> index mapping shared by the QA and LM pipelines.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

pub const NULL_TOKEN: &str = "<null>";
pub const OOV_TOKEN: &str = "<unk>";

/// Dense word indices in `[0, len)`.
///
/// Layout: ordinary words in first-occurrence order, then the null symbol,
/// then the out-of-vocabulary symbol, then multi-word answer combinations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    null: usize,
    oov: usize,
}

impl Hash for Vocabulary {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.words.hash(state);
        self.null.hash(state);
        self.oov.hash(state);
    }
}

impl Vocabulary {
    /// `words` are the ordinary tokens, `answer_combos` the comma-joined
    /// multi-word answers. Duplicates and reserved tokens are skipped.
    pub fn build<'a, I, J>(words: I, answer_combos: J) -> Self
    where
        I: IntoIterator<Item = &'a str>,
        J: IntoIterator<Item = &'a str>,
    {
        let mut vocab = Vocabulary {
            words: Vec::new(),
            index: HashMap::new(),
            null: 0,
            oov: 0,
        };
        for w in words {
            if w != NULL_TOKEN && w != OOV_TOKEN {
                vocab.push(w);
            }
        }
        vocab.null = vocab.push(NULL_TOKEN);
        vocab.oov = vocab.push(OOV_TOKEN);
        for combo in answer_combos {
            vocab.push(combo);
        }
        vocab
    }

    /// Rebuilds a vocabulary from its full ordered word list.
    pub fn from_ordered(words: Vec<String>) -> Option<Self> {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            if index.insert(w.clone(), i).is_some() {
                return None;
            }
        }
        let null = *index.get(NULL_TOKEN)?;
        let oov = *index.get(OOV_TOKEN)?;
        Some(Vocabulary {
            words,
            index,
            null,
            oov,
        })
    }

    fn push(&mut self, w: &str) -> usize {
        if let Some(&i) = self.index.get(w) {
            return i;
        }
        let i = self.words.len();
        self.words.push(w.to_owned());
        self.index.insert(w.to_owned(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn null(&self) -> usize {
        self.null
    }

    pub fn oov(&self) -> usize {
        self.oov
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn index_or_oov(&self, word: &str) -> usize {
        self.get(word).unwrap_or(self.oov)
    }

    pub fn word(&self, index: usize) -> &str {
        &self.words[index]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_words_null_oov_combos() {
        let v = Vocabulary::build(["b", "a", "b"], ["a,b"]);
        assert_eq!(v.words(), &["b", "a", NULL_TOKEN, OOV_TOKEN, "a,b"]);
        assert_eq!(v.null(), 2);
        assert_eq!(v.oov(), 3);
        assert_eq!(v.index_or_oov("zzz"), 3);
        assert_eq!(v.get("a,b"), Some(4));
    }

    #[test]
    fn reserved_tokens_in_input_are_not_duplicated() {
        let v = Vocabulary::build(["x", OOV_TOKEN, "y"], []);
        assert_eq!(v.len(), 4);
        assert_eq!(v.word(v.oov()), OOV_TOKEN);
    }

    #[test]
    fn from_ordered_round_trips() {
        let v = Vocabulary::build(["m", "n"], ["m,n"]);
        let w = Vocabulary::from_ordered(v.words().to_vec()).unwrap();
        assert_eq!(v, w);
        assert!(Vocabulary::from_ordered(vec!["a".into()]).is_none());
    }
}
