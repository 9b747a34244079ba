use memn2n::data::{corpus_from_text, generate_corpus, generate_synthetic_task, QaExample, Split, SyntheticConfig};
use memn2n::error::Error;
use memn2n::model::{Attention, ModelConfig, ParamSet, Tying};
use memn2n::tensor::seeded_rng;
use memn2n::train::{evaluate_lm, evaluate_qa, sgd_step, train_lm, train_qa, ClipPolicy, LmSchedule, QaSchedule};
use proptest::prelude::*;
use rand::Rng;

fn one_fact(n: usize, seed: u64) -> (Vec<QaExample>, memn2n::vocab::Vocabulary) {
    let ds = generate_synthetic_task(&SyntheticConfig::one_fact(), n, seed, Split::Train);
    (ds.examples(), ds.vocab)
}

fn small_qa() -> ModelConfig {
    ModelConfig {
        dim: 10,
        hops: 2,
        capacity: 12,
        ..ModelConfig::qa()
    }
}

fn quick(epochs: usize, restarts: usize) -> QaSchedule {
    QaSchedule {
        epochs,
        restarts,
        ..QaSchedule::per_task()
    }
}

#[test]
fn qa_training_is_deterministic() {
    let (ex, vocab) = one_fact(40, 2);
    let schedule = QaSchedule {
        linear_start: true,
        ls_max_epochs: 2,
        random_noise: true,
        ..quick(3, 2)
    };
    let a = train_qa(&ex[..30], &ex[30..], &vocab, &small_qa(), &schedule, 9).unwrap();
    let b = train_qa(&ex[..30], &ex[30..], &vocab, &small_qa(), &schedule, 9).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.to_csv(), b.to_csv());
    let c = train_qa(&ex[..30], &ex[30..], &vocab, &small_qa(), &schedule, 10).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn zero_epochs_returns_the_initialization() {
    let (ex, vocab) = one_fact(10, 2);
    let config = small_qa();
    let schedule = quick(0, 1);
    let report = train_qa(&ex, &[], &vocab, &config, &schedule, 4).unwrap();
    assert!(report.rows.is_empty());
    let init = ParamSet::gaussian(
        &config,
        vocab.len(),
        vocab.null(),
        schedule.init_sigma,
        &mut seeded_rng(4, 1),
    );
    assert_eq!(report.params, init);
}

#[test]
fn single_example_is_memorized() {
    let (ex, vocab) = one_fact(1, 6);
    let schedule = QaSchedule {
        lr: 0.05,
        ..quick(60, 1)
    };
    let report = train_qa(&ex[..1], &[], &vocab, &small_qa(), &schedule, 1).unwrap();
    let m = evaluate_qa(&ex[..1], &report.params, &small_qa(), Attention::Softmax, vocab.oov()).unwrap();
    assert_eq!(m.errors, 0);
    assert_eq!(report.selected_run().score, 0.0);
}

#[test]
fn divergent_restarts_are_reported() {
    let (ex, vocab) = one_fact(20, 2);
    let schedule = QaSchedule {
        lr: 1e200,
        clip: ClipPolicy::None,
        ..quick(5, 2)
    };
    match train_qa(&ex, &[], &vocab, &small_qa(), &schedule, 1) {
        Err(Error::NonFinite { .. }) => {}
        other => panic!("expected a non-finite error, got {:?}", other.map(|r| r.runs)),
    }
}

#[test]
fn linear_start_keeps_its_rate_and_anneals() {
    let (ex, vocab) = one_fact(30, 3);
    let schedule = QaSchedule {
        linear_start: true,
        ls_max_epochs: 2,
        anneal_every: 2,
        ..quick(4, 1)
    };
    let report = train_qa(&ex[..24], &ex[24..], &vocab, &small_qa(), &schedule, 2).unwrap();
    let lrs: Vec<f64> = report.series(0, "train", "lr").into_iter().map(|(_, v)| v).collect();
    assert_eq!(lrs, vec![0.005, 0.005, 0.005, 0.005, 0.0025, 0.0025]);
}

#[test]
fn qa_schedule_halves_every_25_epochs() {
    let s = QaSchedule::per_task();
    assert_eq!(s.lr_at(0), 0.01);
    assert_eq!(s.lr_at(24), 0.01);
    assert_eq!(s.lr_at(25), 0.005);
    assert_eq!(s.lr_at(99), 0.01 / 8.0);
}

fn lm_config(dim: usize, memory: usize) -> ModelConfig {
    ModelConfig::lm(dim, 2, memory)
}

#[test]
fn lm_rates_are_powers_of_the_anneal_factor() {
    let text = generate_corpus(3000, 4);
    let (train, valid) = text.split_at(text.len() * 5 / 6);
    let valid = &valid[valid.find(' ').unwrap()..];
    let corpus = corpus_from_text(train, valid, valid, 0).unwrap();
    let schedule = LmSchedule {
        lr: 0.05,
        max_epochs: 12,
        restarts: 1,
        ..LmSchedule::default()
    };
    let report = train_lm(
        &corpus.train,
        &corpus.valid,
        &corpus.vocab,
        &lm_config(8, 6),
        &schedule,
        1,
    )
    .unwrap();
    let lrs = report.series(0, "train", "lr");
    assert!(!lrs.is_empty());
    let mut prev = f64::INFINITY;
    for (_, lr) in lrs {
        let j = (0.05 / lr).ln() / 1.5f64.ln();
        assert!((j - j.round()).abs() < 1e-9, "lr {lr} is not 0.05/1.5^j");
        assert!(lr <= prev);
        prev = lr;
    }
}

#[test]
fn lm_stops_below_the_minimum_rate() {
    // validation words are all unknown, so every epoch makes it worse
    let corpus = corpus_from_text("a b a b a b", "z z z z", "b", 0).unwrap();
    let schedule = LmSchedule {
        lr: 1e-2,
        min_lr: 5e-5,
        anneal_factor: 10.0,
        restarts: 1,
        ..LmSchedule::default()
    };
    let report = train_lm(
        &corpus.train,
        &corpus.valid,
        &corpus.vocab,
        &lm_config(4, 2),
        &schedule,
        1,
    )
    .unwrap();
    let lrs: Vec<f64> = report.series(0, "train", "lr").into_iter().map(|(_, v)| v).collect();
    assert_eq!(lrs, vec![1e-2, 1e-3, 1e-4]);
}

#[test]
fn constant_corpus_is_learned_quickly() {
    let text = vec!["tok"; 2000].join(" ");
    let corpus = corpus_from_text(&text, &text[..400], &text[..400], 0).unwrap();
    let schedule = LmSchedule {
        max_epochs: 2,
        restarts: 1,
        ..LmSchedule::default()
    };
    let config = lm_config(8, 5);
    let report = train_lm(&corpus.train, &corpus.valid, &corpus.vocab, &config, &schedule, 3).unwrap();
    let ppl = evaluate_lm(&corpus.valid, &report.params, &config)
        .unwrap()
        .perplexity();
    assert!(ppl < 1.05, "perplexity {ppl}");
}

#[test]
fn zero_parameters_give_uniform_perplexity() {
    let text = generate_corpus(2000, 8);
    let corpus = corpus_from_text(&text, &text, &text, 0).unwrap();
    let config = lm_config(6, 4);
    let params = ParamSet::zeros(
        memn2n::model::Layout::tied(&config, corpus.vocab.len()),
        corpus.vocab.null(),
    );
    let m = evaluate_lm(&corpus.valid, &params, &config).unwrap();
    let v = corpus.vocab.len() as f64;
    assert!((m.perplexity() - v).abs() < 1e-9 * v, "{} vs {v}", m.perplexity());
}

#[test]
fn lm_requires_layerwise_tying() {
    let corpus = corpus_from_text("a b a b", "a b", "a", 0).unwrap();
    let config = ModelConfig {
        tying: Tying::Adjacent,
        ..lm_config(4, 2)
    };
    assert!(train_lm(
        &corpus.train,
        &corpus.valid,
        &corpus.vocab,
        &config,
        &LmSchedule::single_run(),
        1
    )
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn clipped_updates_are_bounded(seed in 0u64..1_000_000, lr in 1e-4f64..1.0, bound in 0.1f64..50.0, scale in 0.01f64..1e3, global in any::<bool>()) {
        let config = ModelConfig { dim: 4, hops: 2, capacity: 3, tying: if global { Tying::LayerWise } else { Tying::Adjacent }, ..ModelConfig::qa() };
        let mut rng = seeded_rng(seed, 0);
        let before = ParamSet::gaussian(&config, 7, 6, 0.3, &mut rng);
        let mut grads = before.zeros_like();
        for t in grads.tensors_mut() {
            t.as_mut_slice().iter_mut().for_each(|x| *x = rng.random_range(-scale..scale));
        }
        let clip = if global { ClipPolicy::Global(bound) } else { ClipPolicy::PerTensor(bound) };
        let mut after = before.clone();
        sgd_step(&mut after, &mut grads, lr, clip).unwrap();
        let deltas: Vec<f64> = before.tensors().iter().zip(after.tensors()).map(|(a, b)| {
            a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        }).collect();
        let slack = 1.0 + 1e-9;
        if global {
            let total = deltas.iter().map(|d| d * d).sum::<f64>().sqrt();
            prop_assert!(total <= lr * bound * slack, "{total} > {}", lr * bound);
        } else {
            for d in deltas {
                prop_assert!(d <= lr * bound * slack, "{d} > {}", lr * bound);
            }
        }
    }
}
