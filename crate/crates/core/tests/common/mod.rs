//! Property checks shared by the model tests and the acceptance target.
//! Each returns the worst measured deviation, or a description of the
//! first violation.
#![allow(dead_code)]

use memn2n::data::{generate_synthetic_task, Split, SyntheticConfig, TaskKind};
use memn2n::grad::{backward, backward_into, random_case, GradCheckCase};
use memn2n::model::{
    forward, forward_from_state, Attention, Encoding, Episode, HopNonlinearity, ModelConfig, ModelParams, Slot,
    TensorKind, Tying,
};
use memn2n::tensor::{seeded_rng, softmax};
use memn2n::train::{sgd_step, train_qa, ClipPolicy, QaSchedule};
use rand::Rng;

pub type Check = Result<f64, String>;

pub fn qa_config(dim: usize, hops: usize, encoding: Encoding, tying: Tying, temporal: bool) -> ModelConfig {
    ModelConfig {
        dim,
        hops,
        capacity: 8,
        encoding,
        tying,
        temporal,
        hop_nonlinearity: HopNonlinearity::None,
        lm_mode: false,
        relu_half: false,
    }
}

/// Configurations covering both encodings and tyings, K = 1..3.
pub fn configs() -> Vec<ModelConfig> {
    let mut out = Vec::new();
    for (i, enc) in [Encoding::BagOfWords, Encoding::Position].into_iter().enumerate() {
        for (j, tying) in [Tying::Adjacent, Tying::LayerWise].into_iter().enumerate() {
            out.push(qa_config(4 + i + j, 1 + (i + 2 * j) % 3, enc, tying, (i + j) % 2 == 0));
        }
    }
    out.push(ModelConfig::lm(5, 2, 6));
    out
}

pub fn case(config: ModelConfig, attention: Attention, slots: usize, seed: u64) -> GradCheckCase {
    random_case(config, attention, slots, seed).expect("case")
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Probability vector and invariance to adding a constant.
pub fn softmax_properties(seed: u64) -> Check {
    let mut rng = seeded_rng(seed, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let n = rng.random_range(1..20);
        let z: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
        let c = rng.random_range(-100.0..100.0);
        let p = softmax(&z).map_err(|e| e.to_string())?;
        let q = softmax(&z.iter().map(|x| x + c).collect::<Vec<_>>()).map_err(|e| e.to_string())?;
        if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
            return Err(format!("entry outside [0, 1]: {p:?}"));
        }
        worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
        for (a, b) in p.iter().zip(&q) {
            worst = worst.max((a - b).abs());
        }
    }
    if worst > 1e-12 {
        return Err(format!("deviation {worst:e}"));
    }
    Ok(worst)
}

/// Each hop's read-out `o` is `sum p_i c_i` and lies inside the box spanned
/// by the output memories.
pub fn convex_hull(c: &GradCheckCase) -> Check {
    let trace = forward(&c.episode, &c.params, &c.config, Attention::Softmax).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (k, h) in trace.hops.iter().enumerate() {
        if h.p.iter().any(|&p| p < 0.0) || (h.p.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(format!("hop {k}: weights are not a distribution"));
        }
        for r in 0..h.o.len() {
            let lo = h.bank.c.iter().map(|c| c[r]).fold(f64::INFINITY, f64::min);
            let hi = h.bank.c.iter().map(|c| c[r]).fold(f64::NEG_INFINITY, f64::max);
            if h.o[r] < lo - 1e-12 || h.o[r] > hi + 1e-12 {
                return Err(format!("hop {k} component {r}: {} outside [{lo}, {hi}]", h.o[r]));
            }
            let mix: f64 = h.p.iter().zip(&h.bank.c).map(|(p, c)| p * c[r]).sum();
            worst = worst.max((mix - h.o[r]).abs());
        }
    }
    if worst > 1e-12 {
        return Err(format!("read-out differs from the weighted sum by {worst:e}"));
    }
    Ok(worst)
}

/// Under linear attention and no ReLU, `u -> logits` is linear.
pub fn linear_start_linearity(c: &GradCheckCase, seed: u64) -> Check {
    let mut rng = seeded_rng(seed, 2);
    let d = c.config.dim;
    let logits = |u: Vec<f64>| -> Result<Vec<f64>, String> {
        forward_from_state(u, &c.episode.slots, &c.params, &c.config, Attention::Linear)
            .map(|t| t.logits)
            .map_err(|e| e.to_string())
    };
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let u1: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let u2: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = rng.random_range(-3.0..3.0);
        let (f1, f2) = (logits(u1.clone())?, logits(u2.clone())?);
        let sum = logits(u1.iter().zip(&u2).map(|(x, y)| x + y).collect())?;
        let scaled = logits(u1.iter().map(|x| a * x).collect())?;
        let scale = f1.iter().chain(&f2).fold(0.0f64, |m, x| m.max(x.abs())).max(1e-300);
        for j in 0..f1.len() {
            worst = worst.max((sum[j] - f1[j] - f2[j]).abs() / scale);
            worst = worst.max((scaled[j] - a * f1[j]).abs() / (a.abs() * scale).max(1e-300));
        }
    }
    if worst > 1e-9 {
        return Err(format!("relative deviation {worst:e}"));
    }
    Ok(worst)
}

/// Permuting the memory slots permutes every hop's weights the same way
/// (temporal encoding off, since its rows are tied to slot positions).
pub fn permutation_equivariance(c: &GradCheckCase, seed: u64) -> Check {
    assert!(!c.config.temporal, "slot order is meaningful with temporal rows");
    let mut rng = seeded_rng(seed, 3);
    let n = c.episode.slots.len();
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let permuted = Episode {
        slots: perm.iter().map(|&i| c.episode.slots[i].clone()).collect::<Vec<Slot>>(),
        ..c.episode.clone()
    };
    let a = forward(&c.episode, &c.params, &c.config, Attention::Softmax).map_err(|e| e.to_string())?;
    let b = forward(&permuted, &c.params, &c.config, Attention::Softmax).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for (ha, hb) in a.hops.iter().zip(&b.hops) {
        for (j, &i) in perm.iter().enumerate() {
            worst = worst.max((hb.p[j] - ha.p[i]).abs());
        }
    }
    for (x, y) in a.logits.iter().zip(&b.logits) {
        worst = worst.max(rel(*x, *y).min((x - y).abs()));
    }
    if worst > 1e-12 {
        return Err(format!("deviation {worst:e} under permutation {perm:?}"));
    }
    Ok(worst)
}

/// Trains a tied model for `steps` SGD steps while applying the same
/// update to an explicit untied copy; every role copy must stay
/// bit-identical to the tied tensor it aliases, and role views of the tied
/// model must share storage.
pub fn tying_survives_sgd(config: &ModelConfig, steps: usize, seed: u64) -> Check {
    let c = case(config.clone(), Attention::Softmax, 4, seed);
    let mut tied = c.params.clone();
    let mut untied = tied.untie(config);
    let layout = tied.layout().clone();
    let untied_layout = untied.layout().clone();
    let mut rng = seeded_rng(seed, 4);
    for step in 0..steps {
        let mut grads = tied.zeros_like();
        let trace = forward(&c.episode, &tied, config, Attention::Softmax).map_err(|e| e.to_string())?;
        backward_into(&trace, &c.episode, &tied, config, &mut grads, 1.0).map_err(|e| e.to_string())?;
        let lr = rng.random_range(0.01..0.2);
        sgd_step(&mut tied, &mut grads, lr, ClipPolicy::PerTensor(40.0)).map_err(|e| e.to_string())?;
        // the clipped tied gradient, applied to every role copy
        for (tb, ub) in layout.bindings().iter().zip(untied_layout.bindings()) {
            let g = grads.tensor(tb.tensor);
            let g = if tb.transposed { g.transpose() } else { g.clone() };
            untied.tensor_mut(ub.tensor).add_scaled(&g, -lr);
        }
        untied.zero_null();
        let expanded = tied.untie(config);
        for (i, (a, b)) in expanded.tensors().iter().zip(untied.tensors()).enumerate() {
            let same = a
                .as_slice()
                .iter()
                .zip(b.as_slice())
                .all(|(x, y)| x.to_bits() == y.to_bits());
            if !same {
                return Err(format!(
                    "step {step}: role copy {} diverged",
                    untied_layout.tensors()[i].name
                ));
            }
        }
    }
    for h in 0..config.hops {
        let aliased = match config.tying {
            Tying::Adjacent => h + 1 == config.hops || std::ptr::eq(tied.output(h), tied.input(h + 1)),
            Tying::LayerWise => {
                std::ptr::eq(tied.input(h), tied.input(0)) && std::ptr::eq(tied.output(h), tied.output(0))
            }
        };
        if !aliased {
            return Err(format!("hop {h}: tied roles no longer share storage"));
        }
    }
    Ok(0.0)
}

/// Every null-symbol embedding column (and answer row) is exactly zero.
pub fn null_entries_zero(params: &ModelParams) -> Check {
    let null = params.null();
    for (spec, t) in params.layout().tensors().iter().zip(params.tensors()) {
        let bad = match spec.kind {
            TensorKind::Embedding => t.column(null).iter().any(|&x| x != 0.0),
            TensorKind::Answer => t.row(null).iter().any(|&x| x != 0.0),
            TensorKind::Temporal | TensorKind::StateMap => false,
        };
        if bad {
            return Err(format!("`{}` has a non-zero null entry", spec.name));
        }
    }
    Ok(0.0)
}

/// Short training runs with every schedule feature on; the null entries
/// must be exactly zero at the end.
pub fn null_columns_through_training(seed: u64) -> Check {
    let sc = SyntheticConfig::for_kind(TaskKind::TwoFact);
    let ds = generate_synthetic_task(&sc, 60, seed, Split::Train);
    let examples = ds.examples();
    for tying in [Tying::Adjacent, Tying::LayerWise] {
        let config = ModelConfig {
            dim: 8,
            hops: 2,
            capacity: 16,
            tying,
            ..ModelConfig::qa()
        };
        let schedule = QaSchedule {
            epochs: 4,
            restarts: 1,
            linear_start: true,
            ls_max_epochs: 2,
            random_noise: true,
            ..QaSchedule::per_task()
        };
        let report = train_qa(&examples[..50], &examples[50..], &ds.vocab, &config, &schedule, seed)
            .map_err(|e| e.to_string())?;
        null_entries_zero(&report.params)?;
    }
    Ok(0.0)
}

/// Folding per-role gradients of the untied model gives the tied gradient.
pub fn tied_gradient_is_role_sum(c: &GradCheckCase) -> Check {
    let trace = forward(&c.episode, &c.params, &c.config, c.attention).map_err(|e| e.to_string())?;
    let tied = backward(&trace, &c.episode, &c.params, &c.config).map_err(|e| e.to_string())?;
    let untied_params = c.params.untie(&c.config);
    let ut = forward(&c.episode, &untied_params, &c.config, c.attention).map_err(|e| e.to_string())?;
    let ug = backward(&ut, &c.episode, &untied_params, &c.config).map_err(|e| e.to_string())?;
    let mut folded = c.params.zeros_like();
    folded.accumulate_untied(&ug);
    let mut worst: f64 = 0.0;
    for (a, b) in tied.tensors().iter().zip(folded.tensors()) {
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}
