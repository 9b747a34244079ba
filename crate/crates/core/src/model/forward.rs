//! K hops of soft attention over memory, then the answer softmax.

use super::config::{Attention, HopNonlinearity, ModelConfig, Tying};
use super::encode::{check_words, encode_into};
use super::memory::{build_bank, MemoryBank, Slot};
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::tensor::{axpy, dot, matvec, matvec_t, softmax, Mat};

/// Entry of the constant language-model query.
pub const LM_QUERY_VALUE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub enum Query {
    /// Question words, embedded through `B`.
    Words(Vec<usize>),
    /// The fixed, untrained language-model query.
    Constant,
}

/// One model input: query, memory slots and the label.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub query: Query,
    pub slots: Vec<Slot>,
    pub target: usize,
}

/// Quantities of one hop, kept for backprop and inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct HopTrace {
    /// State entering the hop, `u^k`.
    pub u: Vec<f64>,
    pub bank: MemoryBank,
    /// `u^T m_i`
    pub scores: Vec<f64>,
    /// Attention weights (equal to `scores` under linear attention).
    pub p: Vec<f64>,
    pub o: Vec<f64>,
    /// State update before any nonlinearity.
    pub pre: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub hops: Vec<HopTrace>,
    /// Final state `u^{K+1}` fed to the answer matrix.
    pub state: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
    pub attention: Attention,
}

impl ForwardTrace {
    pub fn prediction(&self) -> usize {
        argmax(&self.probs)
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(
            (0, f64::NEG_INFINITY),
            |(bi, bv), (i, &x)| {
                if x > bv {
                    (i, x)
                } else {
                    (bi, bv)
                }
            },
        )
        .0
}

pub fn lm_query(dim: usize) -> Vec<f64> {
    vec![LM_QUERY_VALUE; dim]
}

/// ReLU on the first `ceil(d/2)` coordinates; the rest pass through.
pub fn relu_half(u: &[f64]) -> Vec<f64> {
    let half = u.len().div_ceil(2);
    u.iter()
        .enumerate()
        .map(|(i, &x)| if i < half { x.max(0.0) } else { x })
        .collect()
}

/// Applies the configured post-hop nonlinearity.
pub(crate) fn activate(pre: &[f64], config: &ModelConfig) -> Vec<f64> {
    match (config.hop_nonlinearity, config.relu_half) {
        (HopNonlinearity::Relu, _) => pre.iter().map(|x| x.max(0.0)).collect(),
        (HopNonlinearity::None, true) => relu_half(pre),
        (HopNonlinearity::None, false) => pre.to_vec(),
    }
}

/// Derivative mask of [`activate`] at `pre`.
pub(crate) fn activation_mask(pre: &[f64], config: &ModelConfig) -> Vec<f64> {
    let rectified = match (config.hop_nonlinearity, config.relu_half) {
        (HopNonlinearity::Relu, _) => pre.len(),
        (HopNonlinearity::None, true) => config.relu_units(),
        (HopNonlinearity::None, false) => 0,
    };
    pre.iter()
        .enumerate()
        .map(|(i, &x)| if i < rectified && x <= 0.0 { 0.0 } else { 1.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct HopStep {
    pub scores: Vec<f64>,
    pub p: Vec<f64>,
    pub o: Vec<f64>,
    pub pre: Vec<f64>,
    pub next: Vec<f64>,
}

/// One memory hop: `p = Softmax(u^T m)`, `o = sum p_i c_i`, then
/// `u + o` (adjacent) or `H u + o` (layer-wise) and the configured nonlinearity.
pub fn hop(
    u: &[f64],
    bank: &MemoryBank,
    attention: Attention,
    config: &ModelConfig,
    state_map: Option<&Mat>,
) -> Result<HopStep> {
    if bank.is_empty() {
        return Err(Error::Invalid("empty memory bank".into()));
    }
    if let Some(bad) = bank.m.iter().chain(&bank.c).find(|v| v.len() != u.len()) {
        return Err(Error::Dimension(format!(
            "state has {} entries, memory vector has {}",
            u.len(),
            bad.len()
        )));
    }
    let scores: Vec<f64> = bank.m.iter().map(|m| dot(u, m)).collect();
    let p = match attention {
        Attention::Softmax => softmax(&scores)?,
        Attention::Linear => scores.clone(),
    };
    let mut o = vec![0.0; u.len()];
    for (pi, c) in p.iter().zip(&bank.c) {
        axpy(&mut o, *pi, c);
    }
    let mut pre = match (config.tying, state_map) {
        (Tying::LayerWise, Some(h)) => matvec(h, u)?,
        (Tying::LayerWise, None) => return Err(Error::Invalid("layer-wise tying needs a state map".into())),
        (Tying::Adjacent, _) => u.to_vec(),
    };
    axpy(&mut pre, 1.0, &o);
    let next = activate(&pre, config);
    Ok(HopStep {
        scores,
        p,
        o,
        pre,
        next,
    })
}

/// Initial state `u^1`: the embedded question, or the constant LM query.
pub fn query_state(episode: &Episode, params: &ModelParams, config: &ModelConfig) -> Result<Vec<f64>> {
    match (&episode.query, config.lm_mode) {
        (Query::Constant, true) => Ok(lm_query(config.dim)),
        (Query::Words(words), false) => {
            let b = params
                .query()
                .ok_or_else(|| Error::Invalid("model has no question embedding".into()))?;
            check_words(words, b.cols())?;
            let mut u = vec![0.0; config.dim];
            encode_into(&mut u, words, b, config.encoding, params.null());
            Ok(u)
        }
        (Query::Words(_), true) => Err(Error::Invalid("language models take the constant query".into())),
        (Query::Constant, false) => Err(Error::Invalid("QA models need question words".into())),
    }
}

pub fn answer_logits(params: &ModelParams, state: &[f64]) -> Result<Vec<f64>> {
    match params.answer() {
        (w, true) => matvec_t(w, state),
        (w, false) => matvec(w, state),
    }
}

pub fn forward(
    episode: &Episode,
    params: &ModelParams,
    config: &ModelConfig,
    attention: Attention,
) -> Result<ForwardTrace> {
    let u1 = query_state(episode, params, config)?;
    forward_from_state(u1, &episode.slots, params, config, attention)
}

/// Runs the hops from an explicit initial state.
pub fn forward_from_state(
    u1: Vec<f64>,
    slots: &[Slot],
    params: &ModelParams,
    config: &ModelConfig,
    attention: Attention,
) -> Result<ForwardTrace> {
    if u1.len() != config.dim || params.dim() != config.dim {
        return Err(Error::Dimension(format!(
            "config dim {}, params dim {}, state dim {}",
            config.dim,
            params.dim(),
            u1.len()
        )));
    }
    let mut hops = Vec::with_capacity(config.hops);
    let mut u = u1;
    for k in 0..config.hops {
        let bank = build_bank(slots, params, config, k)?;
        let step = hop(&u, &bank, attention, config, params.state_map(k))?;
        hops.push(HopTrace {
            u,
            bank,
            scores: step.scores,
            p: step.p,
            o: step.o,
            pre: step.pre,
        });
        u = step.next;
    }
    let logits = answer_logits(params, &u)?;
    let probs = softmax(&logits)?;
    Ok(ForwardTrace {
        hops,
        state: u,
        logits,
        probs,
        attention,
    })
}
