//! Memory slots and per-hop memory banks.
//!
//! Slot 0 always holds the most recent item; temporal row `i` belongs to slot `i`.

use rand::seq::index::sample;
use rand::Rng;

use super::config::{Encoding, ModelConfig};
use super::encode::encode_into;
use super::params::ModelParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotOrigin {
    /// Index of the source sentence (QA) or token position (LM).
    Sentence(usize),
    /// Empty memory injected for time-index jitter.
    Noise,
    /// Null padding before the start of an LM sequence.
    Padding,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Slot {
    pub words: Vec<usize>,
    pub origin: SlotOrigin,
}

/// Where empty memories are inserted, as slot indices in the final layout.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NoisePlan {
    positions: Vec<usize>,
}

impl NoisePlan {
    pub fn at(mut positions: Vec<usize>) -> Self {
        positions.sort_unstable();
        positions.dedup();
        Self { positions }
    }

    /// `ceil(fraction * sentences)` empty slots at uniformly random positions,
    /// never pushing the total past `capacity`.
    pub fn sample<R: Rng>(sentences: usize, capacity: usize, fraction: f64, rng: &mut R) -> Self {
        let retained = sentences.min(capacity);
        let wanted = (fraction * retained as f64).ceil() as usize;
        let count = wanted.min(capacity - retained);
        if count == 0 {
            return Self::default();
        }
        let positions = sample(rng, retained + count, count).into_vec();
        Self::at(positions)
    }

    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Lays out a story's sentences as memory slots: the most recent `capacity`
/// sentences in reverse order, with noise slots spliced in.
pub fn plan_slots(story: &[Vec<usize>], capacity: usize, noise: Option<&NoisePlan>) -> Vec<Slot> {
    let retained = story.len().min(capacity);
    let noise_positions = noise.map(NoisePlan::positions).unwrap_or(&[]);
    let total = (retained + noise_positions.len()).min(capacity);
    let mut recent = (0..story.len()).rev().take(retained);
    let mut slots = Vec::with_capacity(total);
    for i in 0..total {
        if noise_positions.binary_search(&i).is_ok() {
            slots.push(Slot {
                words: Vec::new(),
                origin: SlotOrigin::Noise,
            });
        } else if let Some(s) = recent.next() {
            slots.push(Slot {
                words: story[s].clone(),
                origin: SlotOrigin::Sentence(s),
            });
        }
    }
    slots
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank {
    /// Input memories `m_i`.
    pub m: Vec<Vec<f64>>,
    /// Output memories `c_i`.
    pub c: Vec<Vec<f64>>,
    pub origins: Vec<SlotOrigin>,
}

impl MemoryBank {
    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }
}

/// Slot encoding scheme: LM memories hold one word each and are never
/// position-weighted.
pub(crate) fn slot_encoding(config: &ModelConfig) -> Encoding {
    if config.lm_mode {
        Encoding::BagOfWords
    } else {
        config.encoding
    }
}

/// Encodes `slots` into the input/output memories of hop `hop` (0-based).
pub fn build_bank(slots: &[Slot], params: &ModelParams, config: &ModelConfig, hop: usize) -> Result<MemoryBank> {
    if slots.is_empty() {
        return Err(Error::Invalid("memory has no slots".into()));
    }
    if slots.len() > config.capacity {
        return Err(Error::Dimension(format!(
            "{} slots exceed capacity {}",
            slots.len(),
            config.capacity
        )));
    }
    let vocab = params.vocab_size();
    for s in slots {
        super::encode::check_words(&s.words, vocab)?;
    }
    let dim = params.dim();
    let null = params.null();
    let scheme = slot_encoding(config);
    let (a, c) = (params.input(hop), params.output(hop));
    let (ta, tc) = (params.temporal_input(hop), params.temporal_output(hop));
    let mut bank = MemoryBank {
        m: Vec::with_capacity(slots.len()),
        c: Vec::with_capacity(slots.len()),
        origins: slots.iter().map(|s| s.origin).collect(),
    };
    for (i, slot) in slots.iter().enumerate() {
        let mut m = vec![0.0; dim];
        encode_into(&mut m, &slot.words, a, scheme, null);
        let mut cv = vec![0.0; dim];
        encode_into(&mut cv, &slot.words, c, scheme, null);
        if let (Some(ta), Some(tc)) = (ta, tc) {
            crate::tensor::axpy(&mut m, 1.0, ta.row(i));
            crate::tensor::axpy(&mut cv, 1.0, tc.row(i));
        }
        bank.m.push(m);
        bank.c.push(cv);
    }
    Ok(bank)
}

/// Plans the slots of `story` and encodes them for hop `hop`.
pub fn build_memories(
    story: &[Vec<usize>],
    params: &ModelParams,
    config: &ModelConfig,
    hop: usize,
    noise: Option<&NoisePlan>,
) -> Result<MemoryBank> {
    if story.is_empty() {
        return Err(Error::Invalid("story has no sentences".into()));
    }
    build_bank(&plan_slots(story, config.capacity, noise), params, config, hop)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::encode::encode_sentence;
    use crate::model::params::ParamSet;
    use crate::tensor::seeded_rng;

    fn config(temporal: bool, capacity: usize) -> ModelConfig {
        ModelConfig {
            dim: 4,
            hops: 2,
            capacity,
            temporal,
            ..ModelConfig::qa()
        }
    }

    #[test]
    fn keeps_most_recent_sentences_reversed() {
        let story: Vec<Vec<usize>> = (0..60).map(|i| vec![i % 5]).collect();
        let slots = plan_slots(&story, 50, None);
        assert_eq!(slots.len(), 50);
        // 1-based sentences 11..=60, most recent first.
        let expected: Vec<SlotOrigin> = (10..60).rev().map(SlotOrigin::Sentence).collect();
        assert_eq!(slots.iter().map(|s| s.origin).collect::<Vec<_>>(), expected);
    }

    #[test]
    fn no_temporal_term_when_disabled() {
        let cfg = config(false, 10);
        let p = ParamSet::gaussian(&cfg, 6, 5, 0.3, &mut seeded_rng(2, 0));
        let bank = build_memories(&[vec![0, 1, 2]], &p, &cfg, 0, None).unwrap();
        let m = encode_sentence(&[0, 1, 2], p.input(0), cfg.encoding, 5).unwrap();
        assert_eq!(bank.m, vec![m]);
    }

    #[test]
    fn noise_slot_holds_only_its_temporal_row() {
        let cfg = config(true, 20);
        let p = ParamSet::gaussian(&cfg, 6, 5, 0.3, &mut seeded_rng(9, 0));
        let story: Vec<Vec<usize>> = (0..10).map(|i| vec![i % 5, (i + 1) % 5]).collect();
        let plan = NoisePlan::at(vec![4]);
        let bank = build_memories(&story, &p, &cfg, 1, Some(&plan)).unwrap();
        assert_eq!(bank.len(), 11);
        assert_eq!(bank.origins[4], SlotOrigin::Noise);
        assert_eq!(bank.m[4], p.temporal_input(1).unwrap().row(4));
        assert_eq!(bank.c[4], p.temporal_output(1).unwrap().row(4));
        // Slots after the noise slot are shifted by one sentence.
        assert_eq!(bank.origins[5], SlotOrigin::Sentence(5));
        let mut m5 = encode_sentence(&story[5], p.input(1), cfg.encoding, 5).unwrap();
        crate::tensor::axpy(&mut m5, 1.0, p.temporal_input(1).unwrap().row(5));
        assert_eq!(bank.m[5], m5);
    }

    #[test]
    fn noise_plan_size() {
        let mut rng = seeded_rng(4, 0);
        assert_eq!(NoisePlan::sample(10, 50, 0.1, &mut rng).len(), 1);
        assert_eq!(NoisePlan::sample(11, 50, 0.1, &mut rng).len(), 2);
        assert_eq!(NoisePlan::sample(50, 50, 0.1, &mut rng).len(), 0);
        let p = NoisePlan::sample(30, 50, 0.1, &mut rng);
        assert!(p.positions().iter().all(|&i| i < 33));
    }
}
