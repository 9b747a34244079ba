//! Word-level corpora and next-word windows.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Corpus {
    pub vocab: Vocabulary,
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

/// A target word and the `N` words before it, most recent first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LmExample {
    pub memory: Vec<usize>,
    pub target: usize,
}

/// Builds a corpus from already tokenized text. The vocabulary comes from
/// the training split only; training words seen fewer than `unk_threshold`
/// times, and unseen words elsewhere, become `<unk>`.
pub fn corpus_from_text(train: &str, valid: &str, test: &str, unk_threshold: usize) -> Result<Corpus> {
    let train_tokens: Vec<&str> = train.split_whitespace().collect();
    if train_tokens.is_empty() {
        return Err(Error::EmptyDataset("training split has no tokens".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in &train_tokens {
        *counts.entry(t).or_default() += 1;
    }
    let kept = train_tokens.iter().copied().filter(|t| counts[t] >= unk_threshold);
    let vocab = Vocabulary::build(kept, []);
    let index = |text: &str| -> Vec<usize> { text.split_whitespace().map(|t| vocab.index_or_oov(t)).collect() };
    Ok(Corpus {
        train: index(train),
        valid: index(valid),
        test: index(test),
        vocab: vocab.clone(),
    })
}

pub fn load_corpus(train: &Path, valid: &Path, test: &Path, unk_threshold: usize) -> Result<Corpus> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    corpus_from_text(&read(train)?, &read(valid)?, &read(test)?, unk_threshold)
}

/// One example per position `t >= 1`: memory is tokens `t-1, t-2, .., t-N`
/// (null-padded before the start of the split), target is token `t`.
pub fn windows(tokens: &[usize], n: usize, null: usize) -> impl Iterator<Item = LmExample> + '_ {
    assert!(n >= 1, "window size must be positive");
    (1..tokens.len()).map(move |t| LmExample {
        memory: (1..=n)
            .map(|back| if back <= t { tokens[t - back] } else { null })
            .collect(),
        target: tokens[t],
    })
}
