//! Dataset ingestion: bAbI-format QA, synthetic stand-in tasks, and
//! word-level language-model corpora.

pub mod lm;
pub mod qa;
pub mod synthetic;

pub use lm::{corpus_from_text, load_corpus, windows, Corpus, LmExample};
pub use qa::{
    build_vocab, parse_babi, read_babi, split_validation, write_babi, QaDataset, QaExample, RawQuestion, RawStory,
    Split, Story,
};
pub use synthetic::{generate_corpus, generate_stories, generate_synthetic_task, SyntheticConfig, TaskKind};
