//! Attention exports: per-example hop traces and dataset-average
//! activation by memory position.

use std::fmt::Write as _;

use crate::data::{windows, QaExample, Story};
use crate::error::{Error, Result};
use crate::model::{forward, Attention, Episode, ForwardTrace, ModelConfig, ModelParams, SlotOrigin};
use crate::tensor::Mat;
use crate::train::{lm_episode, qa_episode};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub slot: usize,
    pub origin: SlotOrigin,
    pub text: String,
    /// Marked as supporting in the dataset. Inspection only.
    pub supporting: bool,
    /// Attention weight at each hop.
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopTraceTable {
    pub question: String,
    pub rows: Vec<TraceRow>,
    pub predicted: String,
    pub answer: String,
}

impl HopTraceTable {
    pub fn hops(&self) -> usize {
        self.rows.first().map_or(0, |r| r.probs.len())
    }

    pub fn column_sum(&self, hop: usize) -> f64 {
        self.rows.iter().map(|r| r.probs[hop]).sum()
    }

    /// True when the most attended slot of some hop is a supporting sentence.
    pub fn top_slot_supports(&self) -> bool {
        (0..self.hops()).any(|k| {
            let top = self
                .rows
                .iter()
                .max_by(|a, b| a.probs[k].total_cmp(&b.probs[k]))
                .expect("trace has rows");
            top.supporting
        })
    }

    pub fn is_correct(&self) -> bool {
        self.predicted == self.answer
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot,source,supporting,text");
        for k in 1..=self.hops() {
            let _ = write!(out, ",hop_{k}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},\"{}\"",
                r.slot + 1,
                origin_label(r.origin),
                r.supporting as u8,
                r.text
            );
            for p in &r.probs {
                let _ = write!(out, ",{p}");
            }
            out.push('\n');
        }
        out
    }

    /// Human-readable table, probabilities to 4 decimals.
    pub fn render(&self) -> String {
        let width = self.rows.iter().map(|r| r.text.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "question: {}", self.question);
        let _ = write!(out, "{:>4}  {:<width$}  sup", "slot", "memory");
        for k in 1..=self.hops() {
            let _ = write!(out, "  hop {k:<2}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{:>4}  {:<width$}  {:^3}",
                r.slot + 1,
                r.text,
                if r.supporting { "*" } else { "" }
            );
            for p in &r.probs {
                let _ = write!(out, "  {p:.4}");
            }
            out.push('\n');
        }
        let _ = writeln!(out, "predicted: {}  answer: {}", self.predicted, self.answer);
        out
    }
}

fn origin_label(o: SlotOrigin) -> String {
    match o {
        SlotOrigin::Sentence(i) => format!("s{}", i + 1),
        SlotOrigin::Noise => "noise".into(),
        SlotOrigin::Padding => "pad".into(),
    }
}

fn words(vocab: &Vocabulary, ids: &[usize]) -> String {
    ids.iter().map(|&i| vocab.word(i)).collect::<Vec<_>>().join(" ")
}

fn check_vocab(params: &ModelParams, vocab: &Vocabulary) -> Result<()> {
    if params.vocab_size() != vocab.len() {
        return Err(Error::VocabularyMismatch(format!(
            "model has {} words, vocabulary {}",
            params.vocab_size(),
            vocab.len()
        )));
    }
    Ok(())
}

fn table(
    trace: &ForwardTrace,
    episode: &Episode,
    vocab: &Vocabulary,
    supporting: &[usize],
    question: String,
) -> HopTraceTable {
    let rows = episode
        .slots
        .iter()
        .enumerate()
        .map(|(i, s)| TraceRow {
            slot: i,
            origin: s.origin,
            text: words(vocab, &s.words),
            supporting: matches!(s.origin, SlotOrigin::Sentence(j) if supporting.contains(&j)),
            probs: trace.hops.iter().map(|h| h.p[i]).collect(),
        })
        .collect();
    HopTraceTable {
        question,
        rows,
        predicted: vocab.word(trace.prediction()).to_owned(),
        answer: vocab.word(episode.target).to_owned(),
    }
}

/// Trace of question `question` of `story`.
pub fn qa_hop_trace(
    story: &Story,
    question: usize,
    params: &ModelParams,
    config: &ModelConfig,
    vocab: &Vocabulary,
) -> Result<HopTraceTable> {
    check_vocab(params, vocab)?;
    let q = story.questions.get(question).ok_or(Error::IndexOutOfRange {
        index: question,
        size: story.questions.len(),
    })?;
    let example = QaExample {
        story: story.sentences[..q.position].to_vec(),
        question: q.words.clone(),
        answer: q.answer,
    };
    let episode = qa_episode(&example, config, None);
    let trace = forward(&episode, params, config, Attention::Softmax)?;
    Ok(table(&trace, &episode, vocab, &q.supporting, words(vocab, &q.words)))
}

/// Trace of the prediction of `tokens[position]` (`position >= 1`).
pub fn lm_hop_trace(
    tokens: &[usize],
    position: usize,
    params: &ModelParams,
    config: &ModelConfig,
    vocab: &Vocabulary,
) -> Result<HopTraceTable> {
    check_vocab(params, vocab)?;
    if position == 0 || position >= tokens.len() {
        return Err(Error::IndexOutOfRange {
            index: position,
            size: tokens.len(),
        });
    }
    let example = windows(&tokens[..=position], config.capacity, vocab.null())
        .last()
        .expect("position >= 1 yields a window");
    let episode = lm_episode(&example, vocab.null());
    let trace = forward(&episode, params, config, Attention::Softmax)?;
    Ok(table(
        &trace,
        &episode,
        vocab,
        &[],
        format!("<next word at {position}>"),
    ))
}

/// `hops x positions`: mean attention weight at each slot, every row then
/// divided by its maximum. Slots an episode does not have count as zero.
pub fn average_activation<'a, I>(episodes: I, params: &ModelParams, config: &ModelConfig) -> Result<Mat>
where
    I: IntoIterator<Item = &'a Episode>,
{
    let mut sums: Vec<Vec<f64>> = vec![Vec::new(); config.hops];
    let mut count = 0usize;
    for ep in episodes {
        let trace = forward(ep, params, config, Attention::Softmax)?;
        for (row, h) in sums.iter_mut().zip(&trace.hops) {
            if row.len() < h.p.len() {
                row.resize(h.p.len(), 0.0);
            }
            for (s, p) in row.iter_mut().zip(&h.p) {
                *s += p;
            }
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyDataset("no examples to average".into()));
    }
    let width = sums.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Mat::zeros(config.hops, width);
    for (k, row) in sums.iter().enumerate() {
        let mean: Vec<f64> = row.iter().map(|s| s / count as f64).collect();
        let max = mean.iter().copied().fold(0.0, f64::max);
        for (i, m) in mean.iter().enumerate() {
            out[(k, i)] = m / max;
        }
    }
    Ok(out)
}

/// Entropy (nats) of each row after renormalizing it to sum 1.
pub fn row_entropies(m: &Mat) -> Vec<f64> {
    (0..m.rows())
        .map(|k| {
            let row = m.row(k);
            let total: f64 = row.iter().sum();
            row.iter()
                .filter(|&&x| x > 0.0)
                .map(|&x| {
                    let p = x / total;
                    -p * p.ln()
                })
                .sum()
        })
        .collect()
}

pub fn activation_csv(m: &Mat) -> String {
    let mut out = String::from("hop");
    for i in 1..=m.cols() {
        let _ = write!(out, ",pos_{i}");
    }
    out.push('\n');
    for k in 0..m.rows() {
        let _ = write!(out, "{}", k + 1);
        for x in m.row(k) {
            let _ = write!(out, ",{x}");
        }
        out.push('\n');
    }
    out
}

/// Episodes of an LM token split, for [`average_activation`].
pub fn lm_episodes(tokens: &[usize], config: &ModelConfig, null: usize) -> Vec<Episode> {
    windows(tokens, config.capacity, null)
        .map(|ex| lm_episode(&ex, null))
        .collect()
}

/// Episodes of every question of a QA dataset, noise-free.
pub fn qa_episodes(examples: &[QaExample], config: &ModelConfig) -> Vec<Episode> {
    examples.iter().map(|ex| qa_episode(ex, config, None)).collect()
}
