//! Hand-derived gradients of the answer cross-entropy.

use crate::error::{Error, Result};
use crate::model::config::{Attention, ModelConfig};
use crate::model::encode::encode_backward;
use crate::model::forward::{activation_mask, Episode, ForwardTrace, Query};
use crate::model::memory::slot_encoding;
use crate::model::params::{Gradients, ModelParams};
use crate::tensor::{add_outer, axpy, dot, log_sum_exp, matvec, matvec_t};

/// `-log softmax(logits)[target]`
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if target >= logits.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            size: logits.len(),
        });
    }
    Ok((log_sum_exp(logits) - logits[target]).max(0.0))
}

/// Gradient of the loss of one episode, in a fresh buffer.
pub fn backward(
    trace: &ForwardTrace,
    episode: &Episode,
    params: &ModelParams,
    config: &ModelConfig,
) -> Result<Gradients> {
    let mut grads = params.zeros_like();
    backward_into(trace, episode, params, config, &mut grads, 1.0)?;
    Ok(grads)
}

fn check_trace(trace: &ForwardTrace, episode: &Episode, params: &ModelParams, config: &ModelConfig) -> Result<()> {
    let stale = |what: &str| Err(Error::Dimension(format!("stale forward trace: {what}")));
    if trace.hops.len() != config.hops {
        return stale("hop count");
    }
    if trace.logits.len() != params.vocab_size() {
        return stale("vocabulary size");
    }
    if trace.state.len() != config.dim {
        return stale("state dimension");
    }
    if trace.hops.iter().any(|h| h.p.len() != episode.slots.len()) {
        return stale("slot count");
    }
    Ok(())
}

/// Adds `scale * dLoss/dParams` into `grads` and returns the unscaled loss.
///
/// Tied tensors receive the contributions of every role they play. Null
/// columns are left at zero; the LM query and position weights are constants.
pub fn backward_into(
    trace: &ForwardTrace,
    episode: &Episode,
    params: &ModelParams,
    config: &ModelConfig,
    grads: &mut Gradients,
    scale: f64,
) -> Result<f64> {
    check_trace(trace, episode, params, config)?;
    let loss = cross_entropy(&trace.logits, episode.target)?;
    let layout = params.layout().clone();
    let null = params.null();

    let mut dz = trace.probs.clone();
    dz[episode.target] -= 1.0;
    dz.iter_mut().for_each(|x| *x *= scale);

    let (w_idx, transposed) = layout.answer();
    let mut g_u = if transposed {
        // W^T is stored as C^K (d x V)
        add_outer(grads.tensor_mut(w_idx), 1.0, &trace.state, &dz);
        matvec(params.tensor(w_idx), &dz)?
    } else {
        add_outer(grads.tensor_mut(w_idx), 1.0, &dz, &trace.state);
        matvec_t(params.tensor(w_idx), &dz)?
    };

    let scheme = slot_encoding(config);
    for k in (0..config.hops).rev() {
        let h = &trace.hops[k];
        let mask = activation_mask(&h.pre, config);
        let g_pre: Vec<f64> = g_u.iter().zip(&mask).map(|(g, m)| g * m).collect();

        let mut g_prev = match layout.state_map(k) {
            Some(hi) => {
                add_outer(grads.tensor_mut(hi), 1.0, &g_pre, &h.u);
                matvec_t(params.tensor(hi), &g_pre)?
            }
            None => g_pre.clone(),
        };

        // o = sum_i p_i c_i
        let g_p: Vec<f64> = h.bank.c.iter().map(|c| dot(&g_pre, c)).collect();
        let g_s: Vec<f64> = match trace.attention {
            Attention::Softmax => {
                let mean = dot(&h.p, &g_p);
                h.p.iter().zip(&g_p).map(|(p, g)| p * (g - mean)).collect()
            }
            Attention::Linear => g_p,
        };

        let (a_idx, c_idx) = (layout.input(k), layout.output(k));
        let (ta_idx, tc_idx) = (layout.temporal_input(k), layout.temporal_output(k));
        let mut g_m = vec![0.0; config.dim];
        let mut g_c = vec![0.0; config.dim];
        for (i, slot) in episode.slots.iter().enumerate() {
            axpy(&mut g_prev, g_s[i], &h.bank.m[i]);

            g_m.iter_mut().zip(&h.u).for_each(|(g, u)| *g = g_s[i] * u);
            g_c.iter_mut().zip(&g_pre).for_each(|(g, o)| *g = h.p[i] * o);

            encode_backward(&g_m, &slot.words, grads.tensor_mut(a_idx), scheme, null);
            encode_backward(&g_c, &slot.words, grads.tensor_mut(c_idx), scheme, null);
            if let (Some(ta), Some(tc)) = (ta_idx, tc_idx) {
                axpy(grads.tensor_mut(ta).row_mut(i), 1.0, &g_m);
                axpy(grads.tensor_mut(tc).row_mut(i), 1.0, &g_c);
            }
        }
        g_u = g_prev;
    }

    if let (Query::Words(words), Some(b_idx)) = (&episode.query, layout.query()) {
        encode_backward(&g_u, words, grads.tensor_mut(b_idx), config.encoding, null);
    }
    grads.zero_null();
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_cases() {
        let v = 7;
        let uniform = vec![0.3; v];
        assert!((cross_entropy(&uniform, 2).unwrap() - (v as f64).ln()).abs() < 1e-14);
        assert!(cross_entropy(&[800.0, 0.0, 0.0], 0).unwrap() < 1e-300);
        let expected = (1.0 + (-1.0f64).exp()).ln();
        assert!((cross_entropy(&[1.0, 0.0], 0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.3133).abs() < 1e-4);
        assert!(cross_entropy(&[1.0], 1).is_err());
    }
}
