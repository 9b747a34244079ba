//! Central finite differences against the analytic gradient, plus the
//! randomized configuration sweep used by `gradcheck`.

use rand::seq::IndexedRandom;
use rand::Rng;

use super::backward::{backward, cross_entropy};
use crate::error::Result;
use crate::model::config::{Attention, Encoding, HopNonlinearity, ModelConfig, Tying};
use crate::model::encode::for_each_weighted;
use crate::model::forward::{forward, Episode, ForwardTrace, Query};
use crate::model::memory::{slot_encoding, Slot, SlotOrigin};
use crate::model::params::{Gradients, ModelParams, ParamSet};
use crate::tensor::seeded_rng;

pub const DEFAULT_EPS: f64 = 1e-5;
/// Pass threshold for the full model.
pub const TOLERANCE: f64 = 1e-4;
/// Pass threshold when all memory softmaxes are removed.
pub const LINEAR_TOLERANCE: f64 = 1e-6;
/// Rectified pre-activations closer than this to zero count as a kink.
pub const KINK_MARGIN: f64 = 1e-3;
/// Smallest answer probability accepted in a linear-attention case. Raw
/// inner-product attention can push logits far apart; the gradient of a
/// word with probability near zero is then smaller than the roundoff of a
/// central difference.
pub const MIN_LINEAR_PROB: f64 = 1e-4;

/// `|a - b| / max(|a|, |b|, 1e-8)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Worst relative error per tensor name.
    pub per_tensor: Vec<(String, f64)>,
    pub max_error: f64,
    pub coordinates: usize,
}

/// True when every unconstrained coordinate's central difference at `eps`
/// agrees with those at `eps / 2` and `2 * eps` to within a quarter of
/// `tolerance`, i.e. the
/// difference quotient is stable enough to judge the analytic gradient.
/// Never looks at the analytic gradient itself.
pub fn finite_differences_stable(
    episode: &Episode,
    params: &ModelParams,
    config: &ModelConfig,
    attention: Attention,
    eps: f64,
    tolerance: f64,
) -> Result<bool> {
    let mut probe = params.clone();
    let mut quotient = |t: usize, i: usize, h: f64| -> Result<f64> {
        let orig = params.tensor(t).as_slice()[i];
        probe.tensor_mut(t).as_mut_slice()[i] = orig + h;
        let plus = loss(episode, &probe, config, attention)?;
        probe.tensor_mut(t).as_mut_slice()[i] = orig - h;
        let minus = loss(episode, &probe, config, attention)?;
        probe.tensor_mut(t).as_mut_slice()[i] = orig;
        Ok((plus - minus) / (2.0 * h))
    };
    for (t, spec) in params.layout().tensors().iter().enumerate() {
        for i in 0..spec.rows * spec.cols {
            if params.is_constrained(t, i) {
                continue;
            }
            let d = quotient(t, i, eps)?;
            for h in [0.5 * eps, 2.0 * eps] {
                if relative_error(d, quotient(t, i, h)?) > 0.25 * tolerance {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

pub fn loss(episode: &Episode, params: &ModelParams, config: &ModelConfig, attention: Attention) -> Result<f64> {
    let trace = forward(episode, params, config, attention)?;
    cross_entropy(&trace.logits, episode.target)
}

/// Compares `backward` with central differences over every unconstrained coordinate.
pub fn finite_diff_check(
    episode: &Episode,
    params: &ModelParams,
    config: &ModelConfig,
    attention: Attention,
    eps: f64,
) -> Result<GradCheckReport> {
    let trace = forward(episode, params, config, attention)?;
    let analytic = backward(&trace, episode, params, config)?;
    compare_with_finite_differences(&analytic, episode, params, config, attention, eps)
}

/// Compares a supplied gradient with central differences.
pub fn compare_with_finite_differences(
    analytic: &Gradients,
    episode: &Episode,
    params: &ModelParams,
    config: &ModelConfig,
    attention: Attention,
    eps: f64,
) -> Result<GradCheckReport> {
    assert!(eps > 0.0, "eps must be positive");
    let mut probe = params.clone();
    let mut per_tensor = Vec::new();
    let mut max_error: f64 = 0.0;
    let mut coordinates = 0;
    for (t, spec) in params.layout().tensors().iter().enumerate() {
        let mut worst: f64 = 0.0;
        for i in 0..spec.rows * spec.cols {
            if params.is_constrained(t, i) {
                continue;
            }
            let orig = params.tensor(t).as_slice()[i];
            probe.tensor_mut(t).as_mut_slice()[i] = orig + eps;
            let plus = loss(episode, &probe, config, attention)?;
            probe.tensor_mut(t).as_mut_slice()[i] = orig - eps;
            let minus = loss(episode, &probe, config, attention)?;
            probe.tensor_mut(t).as_mut_slice()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            worst = worst.max(relative_error(analytic.tensor(t).as_slice()[i], numeric));
            coordinates += 1;
        }
        max_error = max_error.max(worst);
        per_tensor.push((spec.name.clone(), worst));
    }
    Ok(GradCheckReport {
        per_tensor,
        max_error,
        coordinates,
    })
}

/// Distance of the closest rectified pre-activation from the ReLU kink
/// (infinite when nothing is rectified).
pub fn kink_margin(trace: &ForwardTrace, config: &ModelConfig) -> f64 {
    let rectified = match (config.hop_nonlinearity, config.relu_half) {
        (HopNonlinearity::Relu, _) => config.dim,
        (HopNonlinearity::None, true) => config.relu_units(),
        (HopNonlinearity::None, false) => 0,
    };
    trace
        .hops
        .iter()
        .flat_map(|h| h.pre[..rectified].iter())
        .fold(f64::INFINITY, |m, x| m.min(x.abs()))
}

/// One randomized gradient-check problem.
#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub label: String,
    pub config: ModelConfig,
    pub params: ModelParams,
    pub episode: Episode,
    pub attention: Attention,
}

impl GradCheckCase {
    pub fn tolerance(&self) -> f64 {
        match self.attention {
            Attention::Softmax => TOLERANCE,
            Attention::Linear => LINEAR_TOLERANCE,
        }
    }

    /// Number of memory slots used by the episode.
    pub fn slots(&self) -> usize {
        self.episode.slots.len()
    }
}

const CASE_VOCAB: usize = 8;
const CASE_NULL: usize = CASE_VOCAB - 1;
const CASE_SIGMA: f64 = 0.4;

/// True when some word contributes identically to every slot in some
/// component. Moving its
/// input embedding then shifts all scores equally, which the softmax
/// ignores: the exact gradient is zero and a central difference returns
/// only roundoff, far above the relative-error floor.
fn shift_symmetric(slots: &[Slot], config: &ModelConfig) -> bool {
    if slots.len() < 2 {
        return false;
    }
    let scheme = slot_encoding(config);
    let contribution = |slot: &Slot, word: usize| {
        let mut total = vec![0.0; config.dim];
        for_each_weighted(&slot.words, CASE_NULL, config.dim, scheme, |w, l| {
            if w == word {
                for (k, t) in total.iter_mut().enumerate() {
                    *t += l.map_or(1.0, |l| l[k]);
                }
            }
        });
        total
    };
    // compared per component: under position encoding a single row of the
    // weights can be constant across positions (k = d/2)
    (0..CASE_NULL).any(|w| {
        let per_slot: Vec<Vec<f64>> = slots.iter().map(|s| contribution(s, w)).collect();
        (0..config.dim).any(|k| per_slot[0][k] != 0.0 && per_slot.iter().all(|c| c[k] == per_slot[0][k]))
    })
}

/// Builds a random small problem for `config`, re-drawing parameters and
/// data until no rectified unit sits within [`KINK_MARGIN`] of zero and the
/// finite differences can resolve every coordinate: no shift-symmetric
/// memory under softmax attention, no answer probability below
/// [`MIN_LINEAR_PROB`] under linear attention, and difference quotients
/// stable under doubling the step (see [`finite_differences_stable`]).
pub fn random_case(config: ModelConfig, attention: Attention, slots: usize, seed: u64) -> Result<GradCheckCase> {
    config.validate()?;
    let words: Vec<usize> = (0..CASE_NULL).collect();
    for attempt in 0..1000u64 {
        let mut rng = seeded_rng(seed, attempt);
        let episode = if config.lm_mode {
            let padding = rng.random_range(0..slots);
            let slots = (0..slots)
                .map(|i| {
                    if i >= slots - padding {
                        Slot {
                            words: vec![CASE_NULL],
                            origin: SlotOrigin::Padding,
                        }
                    } else {
                        Slot {
                            words: vec![*words.choose(&mut rng).unwrap()],
                            origin: SlotOrigin::Sentence(i),
                        }
                    }
                })
                .collect();
            Episode {
                query: Query::Constant,
                slots,
                target: *words.choose(&mut rng).unwrap(),
            }
        } else {
            let sentence = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<usize> {
                let len = rng.random_range(1..=4);
                let mut s: Vec<usize> = (0..len).map(|_| *words.choose(rng).unwrap()).collect();
                if rng.random_bool(0.25) {
                    s.push(CASE_NULL);
                }
                s
            };
            let slots = (0..slots)
                .map(|i| Slot {
                    words: sentence(&mut rng),
                    origin: SlotOrigin::Sentence(i),
                })
                .collect();
            Episode {
                query: Query::Words(sentence(&mut rng)),
                slots,
                target: *words.choose(&mut rng).unwrap(),
            }
        };
        let params = ParamSet::gaussian(&config, CASE_VOCAB, CASE_NULL, CASE_SIGMA, &mut rng);
        let trace = forward(&episode, &params, &config, attention)?;
        let resolvable = match attention {
            Attention::Softmax => !shift_symmetric(&episode.slots, &config),
            Attention::Linear => trace.probs.iter().all(|&p| p >= MIN_LINEAR_PROB),
        };
        let tolerance = match attention {
            Attention::Softmax => TOLERANCE,
            Attention::Linear => LINEAR_TOLERANCE,
        };
        if kink_margin(&trace, &config) > KINK_MARGIN
            && resolvable
            && finite_differences_stable(&episode, &params, &config, attention, DEFAULT_EPS, tolerance)?
        {
            return Ok(GradCheckCase {
                label: describe(&config, attention),
                config,
                params,
                episode,
                attention,
            });
        }
    }
    Err(crate::error::Error::Invalid(
        "could not draw a well-conditioned gradient-check case".into(),
    ))
}

pub fn describe(config: &ModelConfig, attention: Attention) -> String {
    format!(
        "{} {} {} K={} d={} temporal={} {}{}{}",
        if config.lm_mode { "lm" } else { "qa" },
        config.encoding,
        config.tying,
        config.hops,
        config.dim,
        if config.temporal { "on" } else { "off" },
        attention,
        if config.hop_nonlinearity == HopNonlinearity::Relu {
            " relu"
        } else {
            ""
        },
        if config.relu_half { " relu_half" } else { "" },
    )
}

/// The 20-case sweep: all 16 combinations of encoding x tying x temporal x
/// (QA | LM with half-ReLU) with K cycling through 1..=3, plus four
/// linear-attention QA cases.
pub fn default_sweep(seed: u64) -> Result<Vec<GradCheckCase>> {
    let encodings = [Encoding::BagOfWords, Encoding::Position];
    let tyings = [Tying::Adjacent, Tying::LayerWise];
    let mut cases = Vec::with_capacity(20);
    for i in 0..20usize {
        let linear = i >= 16;
        let lm = !linear && i >= 8;
        let dim = 3 + i % 4;
        let slots = 1 + (i * 7) % 5;
        let config = ModelConfig {
            dim,
            hops: 1 + i % 3,
            capacity: slots + 1,
            encoding: encodings[i % 2],
            tying: tyings[(i / 2) % 2],
            temporal: linear || (i / 4) % 2 == 0,
            hop_nonlinearity: if !lm && !linear && i % 4 == 3 {
                HopNonlinearity::Relu
            } else {
                HopNonlinearity::None
            },
            lm_mode: lm,
            relu_half: lm,
        };
        let attention = if linear { Attention::Linear } else { Attention::Softmax };
        cases.push(random_case(config, attention, slots, seed.wrapping_add(i as u64))?);
    }
    Ok(cases)
}
