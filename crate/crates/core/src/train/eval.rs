//! Episode construction and held-out metrics.

use crate::data::{LmExample, QaExample};
use crate::error::{Error, Result};
use crate::grad::cross_entropy;
use crate::model::{
    forward, plan_slots, Attention, Episode, ModelConfig, ModelParams, NoisePlan, Query, Slot, SlotOrigin,
};

pub fn qa_episode(example: &QaExample, config: &ModelConfig, noise: Option<&NoisePlan>) -> Episode {
    Episode {
        query: Query::Words(example.question.clone()),
        slots: plan_slots(&example.story, config.capacity, noise),
        target: example.answer,
    }
}

/// One slot per preceding word; null padding keeps its slot so temporal
/// rows stay aligned with distance.
pub fn lm_episode(example: &LmExample, null: usize) -> Episode {
    let slots = example
        .memory
        .iter()
        .enumerate()
        .map(|(i, &w)| Slot {
            words: vec![w],
            origin: if w == null {
                SlotOrigin::Padding
            } else {
                SlotOrigin::Sentence(i)
            },
        })
        .collect();
    Episode {
        query: Query::Constant,
        slots,
        target: example.target,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QaMetrics {
    pub examples: usize,
    pub errors: usize,
    /// Mean cross-entropy.
    pub loss: f64,
}

impl QaMetrics {
    /// Error rate in percent.
    pub fn error_percent(&self) -> f64 {
        if self.examples == 0 {
            return 0.0;
        }
        100.0 * self.errors as f64 / self.examples as f64
    }
}

/// Argmax error over `examples`. A gold answer outside the vocabulary
/// (mapped to `oov`) is always an error.
pub fn evaluate_qa(
    examples: &[QaExample],
    params: &ModelParams,
    config: &ModelConfig,
    attention: Attention,
    oov: usize,
) -> Result<QaMetrics> {
    let mut errors = 0;
    let mut loss = 0.0;
    for ex in examples {
        let trace = forward(&qa_episode(ex, config, None), params, config, attention)?;
        if ex.answer == oov || trace.prediction() != ex.answer {
            errors += 1;
        }
        loss += cross_entropy(&trace.logits, ex.answer)?;
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            what: "evaluation loss".into(),
        });
    }
    Ok(QaMetrics {
        examples: examples.len(),
        errors,
        loss: if examples.is_empty() {
            0.0
        } else {
            loss / examples.len() as f64
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmMetrics {
    pub tokens: usize,
    /// Mean negative log-likelihood in nats.
    pub cost: f64,
}

impl LmMetrics {
    pub fn perplexity(&self) -> f64 {
        self.cost.exp()
    }
}

/// Per-word cost over every predictable position of `tokens`.
pub fn evaluate_lm(tokens: &[usize], params: &ModelParams, config: &ModelConfig) -> Result<LmMetrics> {
    let null = params.null();
    let mut cost = 0.0;
    let mut count = 0;
    for ex in crate::data::windows(tokens, config.capacity, null) {
        let trace = forward(&lm_episode(&ex, null), params, config, Attention::Softmax)?;
        cost += cross_entropy(&trace.logits, ex.target)?;
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptyDataset("need at least two tokens to score".into()));
    }
    let cost = cost / count as f64;
    if !cost.is_finite() {
        return Err(Error::NonFinite {
            what: "language-model cost".into(),
        });
    }
    Ok(LmMetrics { tokens: count, cost })
}
