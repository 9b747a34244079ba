//! Question-answering trainer: restarts, optional linear start, random
//! noise, step annealing.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::eval::{evaluate_qa, qa_episode, QaMetrics};
use super::report::{MetricRow, RunSummary, TrainReport};
use super::schedule::QaSchedule;
use super::sgd::sgd_step;
use crate::data::QaExample;
use crate::error::{Error, Result};
use crate::grad::backward_into;
use crate::model::{forward, Attention, ModelConfig, ModelParams, NoisePlan, ParamSet};
use crate::tensor::seeded_rng;
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub errors: usize,
    pub examples: usize,
}

/// One pass over `train` in a fresh random order. Returns the running
/// loss and error of the examples as they were seen.
pub fn train_qa_epoch(
    params: &mut ModelParams,
    train: &[QaExample],
    config: &ModelConfig,
    schedule: &QaSchedule,
    attention: Attention,
    lr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<EpochStats> {
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(rng);
    let mut grads = params.zeros_like();
    let mut stats = EpochStats {
        loss: 0.0,
        errors: 0,
        examples: train.len(),
    };
    for batch in order.chunks(schedule.batch_size.max(1)) {
        grads.fill(0.0);
        for &i in batch {
            let ex = &train[i];
            let noise = schedule
                .random_noise
                .then(|| NoisePlan::sample(ex.story.len(), config.capacity, schedule.noise_fraction, rng));
            let episode = qa_episode(ex, config, noise.as_ref());
            let trace = forward(&episode, params, config, attention)?;
            if trace.prediction() != ex.answer {
                stats.errors += 1;
            }
            stats.loss += backward_into(&trace, &episode, params, config, &mut grads, 1.0)?;
        }
        sgd_step(params, &mut grads, lr, schedule.clip)?;
    }
    if !stats.loss.is_finite() {
        return Err(Error::NonFinite {
            what: "training loss".into(),
        });
    }
    stats.loss /= train.len().max(1) as f64;
    Ok(stats)
}

struct Run {
    params: ModelParams,
    epochs: usize,
    train_error: f64,
}

struct Ctx<'a> {
    train: &'a [QaExample],
    valid: &'a [QaExample],
    config: &'a ModelConfig,
    schedule: &'a QaSchedule,
    oov: usize,
}

impl Ctx<'_> {
    fn log_epoch(
        &self,
        rows: &mut Vec<MetricRow>,
        restart: usize,
        epoch: usize,
        lr: f64,
        stats: &EpochStats,
        valid: Option<&QaMetrics>,
    ) {
        let mut push = |split, metric, value| {
            rows.push(MetricRow {
                restart,
                epoch,
                split,
                metric,
                value,
            })
        };
        push("train", "lr", lr);
        push("train", "loss", stats.loss);
        push(
            "train",
            "error",
            100.0 * stats.errors as f64 / stats.examples.max(1) as f64,
        );
        if let Some(v) = valid {
            push("valid", "loss", v.loss);
            push("valid", "error", v.error_percent());
        }
    }

    fn validate(&self, params: &ModelParams, attention: Attention) -> Result<Option<QaMetrics>> {
        if self.valid.is_empty() {
            return Ok(None);
        }
        evaluate_qa(self.valid, params, self.config, attention, self.oov).map(Some)
    }

    fn run(
        &self,
        mut params: ModelParams,
        restart: usize,
        rng: &mut ChaCha8Rng,
        rows: &mut Vec<MetricRow>,
    ) -> Result<Run> {
        let s = self.schedule;
        let mut epoch = 0;
        if s.linear_start {
            let mut best = f64::INFINITY;
            let mut stale = 0;
            while epoch < s.ls_max_epochs && stale < s.ls_patience {
                let stats = train_qa_epoch(&mut params, self.train, self.config, s, Attention::Linear, s.ls_lr, rng)?;
                let valid = self.validate(&params, Attention::Linear)?;
                epoch += 1;
                self.log_epoch(rows, restart, epoch, s.ls_lr, &stats, valid.as_ref());
                let watched = valid.map_or(stats.loss, |v| v.loss);
                if watched < best {
                    best = watched;
                    stale = 0;
                } else {
                    stale += 1;
                }
            }
        }
        for e in 0..s.epochs {
            let lr = s.lr_at(e);
            let stats = train_qa_epoch(&mut params, self.train, self.config, s, Attention::Softmax, lr, rng)?;
            let valid = self.validate(&params, Attention::Softmax)?;
            epoch += 1;
            self.log_epoch(rows, restart, epoch, lr, &stats, valid.as_ref());
        }
        let final_train = evaluate_qa(self.train, &params, self.config, Attention::Softmax, self.oov)?;
        Ok(Run {
            params,
            epochs: epoch,
            train_error: final_train.error_percent(),
        })
    }
}

/// Trains `schedule.restarts` models from independent initializations and
/// keeps the one with the lowest final training error.
///
/// A restart whose loss or gradient becomes non-finite is abandoned and
/// scored as infinitely bad; if every restart is abandoned the error is
/// returned.
pub fn train_qa(
    train: &[QaExample],
    valid: &[QaExample],
    vocab: &Vocabulary,
    config: &ModelConfig,
    schedule: &QaSchedule,
    seed: u64,
) -> Result<TrainReport> {
    config.validate()?;
    if config.lm_mode {
        return Err(Error::config("mode", "QA training needs a QA model"));
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset("no training questions".into()));
    }
    if schedule.restarts == 0 {
        return Err(Error::config("restarts", "must be at least 1"));
    }
    let start = Instant::now();
    let ctx = Ctx {
        train,
        valid,
        config,
        schedule,
        oov: vocab.oov(),
    };
    let mut rows = Vec::new();
    let mut runs = Vec::new();
    let mut best: Option<(usize, f64, ModelParams)> = None;
    let mut last_abort = None;
    for r in 0..schedule.restarts {
        let mut init_rng = seeded_rng(seed, 2 * r as u64 + 1);
        let params = ParamSet::gaussian(config, vocab.len(), vocab.null(), schedule.init_sigma, &mut init_rng);
        let mut rng = seeded_rng(seed, 2 * r as u64 + 2);
        match ctx.run(params, r, &mut rng, &mut rows) {
            Ok(run) => {
                let better = best.as_ref().is_none_or(|(_, e, _)| run.train_error < *e);
                runs.push(RunSummary {
                    restart: r,
                    epochs: run.epochs,
                    score: run.train_error,
                    aborted: None,
                });
                if better {
                    best = Some((r, run.train_error, run.params));
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
