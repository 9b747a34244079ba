//! Language-model trainer with validation-driven annealing.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::eval::{evaluate_lm, lm_episode};
use super::report::{MetricRow, RunSummary, TrainReport};
use super::schedule::LmSchedule;
use super::sgd::sgd_step;
use crate::data::{windows, LmExample};
use crate::error::{Error, Result};
use crate::grad::backward_into;
use crate::model::{forward, Attention, ModelConfig, ModelParams, ParamSet, Tying};
use crate::tensor::seeded_rng;
use crate::vocab::Vocabulary;

/// One shuffled pass over all training windows; returns mean cost.
pub fn train_lm_epoch(
    params: &mut ModelParams,
    examples: &[LmExample],
    config: &ModelConfig,
    schedule: &LmSchedule,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    let null = params.null();
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(rng);
    let mut grads = params.zeros_like();
    let mut cost = 0.0;
    for batch in order.chunks(schedule.batch_size.max(1)) {
        grads.fill(0.0);
        for &i in batch {
            let episode = lm_episode(&examples[i], null);
            let trace = forward(&episode, params, config, Attention::Softmax)?;
            cost += backward_into(&trace, &episode, params, config, &mut grads, 1.0)?;
        }
        sgd_step(params, &mut grads, lr, schedule.clip)?;
    }
    if !cost.is_finite() {
        return Err(Error::NonFinite {
            what: "training cost".into(),
        });
    }
    Ok(cost / examples.len().max(1) as f64)
}

struct Run {
    params: ModelParams,
    epochs: usize,
    valid_cost: f64,
}

fn run(
    mut params: ModelParams,
    examples: &[LmExample],
    valid: &[usize],
    config: &ModelConfig,
    schedule: &LmSchedule,
    restart: usize,
    rng: &mut ChaCha8Rng,
    rows: &mut Vec<MetricRow>,
) -> Result<Run> {
    let mut push = |epoch, split, metric, value| {
        rows.push(MetricRow {
            restart,
            epoch,
            split,
            metric,
            value,
        })
    };
    let mut prev = evaluate_lm(valid, &params, config)?.cost;
    push(0, "valid", "cost", prev);
    push(0, "valid", "perplexity", prev.exp());
    let mut lr = schedule.lr;
    let mut epoch = 0;
    while epoch < schedule.max_epochs && lr >= schedule.min_lr {
        let train_cost = train_lm_epoch(&mut params, examples, config, schedule, lr, rng)?;
        let valid_cost = evaluate_lm(valid, &params, config)?.cost;
        epoch += 1;
        push(epoch, "train", "lr", lr);
        push(epoch, "train", "cost", train_cost);
        push(epoch, "train", "perplexity", train_cost.exp());
        push(epoch, "valid", "cost", valid_cost);
        push(epoch, "valid", "perplexity", valid_cost.exp());
        if valid_cost >= prev {
            lr /= schedule.anneal_factor;
        }
        prev = valid_cost;
    }
    Ok(Run {
        params,
        epochs: epoch,
        valid_cost: prev,
    })
}

/// Trains a layer-wise language model over `train`, annealing on `valid`,
/// and keeps the restart with the lowest final validation cost.
pub fn train_lm(
    train: &[usize],
    valid: &[usize],
    vocab: &Vocabulary,
    config: &ModelConfig,
    schedule: &LmSchedule,
    seed: u64,
) -> Result<TrainReport> {
    config.validate()?;
    if !config.lm_mode {
        return Err(Error::config("mode", "language-model training needs lm_mode"));
    }
    if config.tying != Tying::LayerWise {
        return Err(Error::config("tying", "language models use layer-wise tying"));
    }
    if schedule.restarts == 0 {
        return Err(Error::config("restarts", "must be at least 1"));
    }
    let examples: Vec<LmExample> = windows(train, config.capacity, vocab.null()).collect();
    if examples.is_empty() {
        return Err(Error::EmptyDataset("training split has fewer than two tokens".into()));
    }
    let start = Instant::now();
    let mut rows = Vec::new();
    let mut runs: Vec<RunSummary> = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut last_abort = None;
    for r in 0..schedule.restarts {
        let mut init_rng = seeded_rng(seed, 2 * r as u64 + 1);
        let params = ParamSet::gaussian(config, vocab.len(), vocab.null(), schedule.init_sigma, &mut init_rng);
        let mut rng = seeded_rng(seed, 2 * r as u64 + 2);
        match run(params, &examples, valid, config, schedule, r, &mut rng, &mut rows) {
            Ok(done) => {
                runs.push(RunSummary {
                    restart: r,
                    epochs: done.epochs,
                    score: done.valid_cost,
                    aborted: None,
                });
                if best.as_ref().is_none_or(|(_, c, _)| done.valid_cost < *c) {
                    best = Some((r, done.valid_cost, done.params));
                }
            }
            Err(Error::NonFinite { what }) => {
                runs.push(RunSummary {
                    restart: r,
                    epochs: rows.iter().filter(|x| x.restart == r && x.metric == "lr").count(),
                    score: f64::INFINITY,
                    aborted: Some(format!("non-finite {what}")),
                });
                last_abort = Some(what);
            }
            Err(e) => return Err(e),
        }
    }
    let (selected, _, params) = best.ok_or_else(|| Error::NonFinite {
        what: format!("{} in every restart", last_abort.unwrap_or_default()),
    })?;
    Ok(TrainReport {
        rows,
        runs,
        selected,
        params,
        wall_clock: start.elapsed(),
    })
}
