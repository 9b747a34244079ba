//! Command-line front end. Exit codes: 0 success, 1 failed check or
//! failed training, 2 usage or configuration error.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::{Mode, RunConfig, Source};
use crate::data::{
    build_vocab, corpus_from_text, generate_corpus, generate_stories, read_babi, split_validation, write_babi, Corpus,
    QaDataset, QaExample, RawStory, Split, SyntheticConfig, TaskKind,
};
use crate::error::{Error, Result};
use crate::grad::check::{describe, DEFAULT_EPS};
use crate::grad::{backward, compare_with_finite_differences, default_sweep, random_case, GradCheckCase};
use crate::inspect::{activation_csv, average_activation, lm_episodes, lm_hop_trace, qa_episodes, qa_hop_trace};
use crate::model::{forward, Attention, Encoding, HopNonlinearity, ModelConfig, Tying};
use crate::train::{evaluate_lm, evaluate_qa, train_lm, train_qa, TrainReport};
use crate::vocab::Vocabulary;

/// Synthetic QA test sets are drawn with `seed ^ TEST_SEED_MASK` so they
/// never coincide with a training set drawn from another seed.
pub const TEST_SEED_MASK: u64 = 0x7e57_0000_0000_0000;
/// Seed offsets of the synthetic LM validation and test streams.
const LM_VALID_SEED: u64 = 0x5a11d;
const LM_TEST_SEED: u64 = 0x7e57;

#[derive(Parser, Debug)]
#[command(
    name = "memn2n",
    version,
    about = "End-to-end memory networks: train, evaluate, inspect"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train from a key=value config file; writes checkpoint, report and resolved config.
    Train {
        config: PathBuf,
        /// Override the config's output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Error rate (QA) or perplexity (LM) of a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Per-hop attention over the memories of one example.
    HopTrace {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        /// Story index (QA, 0-based).
        #[arg(long, default_value_t = 0)]
        story: usize,
        /// Question index within the story (QA, 0-based).
        #[arg(long, default_value_t = 0)]
        question: usize,
        /// Token position to predict (LM, >= 1).
        #[arg(long, default_value_t = 1)]
        position: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Mean attention by memory position for each hop, rows scaled to max 1.
    AvgActivation {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Finite-difference check of the analytic gradients.
    Gradcheck(GradArgs),
    /// Write synthetic data: bAbI-format stories or a plain-text corpus.
    GenData {
        /// one-fact, two-fact or corpus.
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 1000)]
        stories: usize,
        #[arg(long, default_value_t = 50_000)]
        tokens: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and test every bAbI task found in a directory; writes a
    /// per-task error table with a mean row.
    ReproBabi {
        /// Directory holding qaN_*_train.txt / qaN_*_test.txt files.
        #[arg(long)]
        dir: PathBuf,
        /// QA config file (model and schedule keys; dataset keys are ignored).
        #[arg(long)]
        config: PathBuf,
        /// Train one model on all tasks instead of one per task.
        #[arg(long)]
        joint: bool,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Train one language model per config and write a perplexity table.
    ReproLm {
        /// LM config files, one table row each.
        #[arg(long, required = true, num_args = 1..)]
        config: Vec<PathBuf>,
        #[arg(long)]
        csv: PathBuf,
    },
}

#[derive(Args, Debug, Clone, Default)]
struct DataArgs {
    /// bAbI task files; one result row per file.
    #[arg(long, num_args = 1..)]
    babi: Vec<PathBuf>,
    /// Tokenized text files (LM); one result row per file.
    #[arg(long, num_args = 1..)]
    text: Vec<PathBuf>,
    /// Generated data: one-fact, two-fact or corpus.
    #[arg(long)]
    synthetic: Option<String>,
    #[arg(long, default_value_t = 200)]
    stories: usize,
    #[arg(long, default_value_t = 5000)]
    tokens: usize,
    #[arg(long, default_value_t = 1)]
    data_seed: u64,
    /// Map unknown QA words to the OOV symbol instead of failing.
    #[arg(long)]
    allow_oov: bool,
}

#[derive(Args, Debug, Clone)]
struct GradArgs {
    /// Check one configuration instead of the default 20-case sweep.
    #[arg(long)]
    single: bool,
    #[arg(long, default_value = "qa")]
    mode: String,
    #[arg(long, default_value_t = 4)]
    dim: usize,
    #[arg(long, default_value_t = 2)]
    hops: usize,
    #[arg(long, default_value_t = 3)]
    slots: usize,
    #[arg(long, default_value = "pe")]
    encoding: Encoding,
    #[arg(long, default_value = "adjacent")]
    tying: Tying,
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    temporal: bool,
    #[arg(long, default_value = "none")]
    nonlinearity: HopNonlinearity,
    /// Linear-start attention (softmax removed).
    #[arg(long)]
    linear: bool,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Perturb the analytic gradient before comparing (negative control).
    #[arg(long, hide = true)]
    corrupt: bool,
}

/// Largest dimension and slot count accepted by `gradcheck`.
pub const GRADCHECK_MAX: usize = 8;

/// Runs the CLI and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonFinite { .. } => 1,
                _ => 2,
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Train { config, out } => cmd_train(&config, out),
        Command::Eval { checkpoint, data, csv } => cmd_eval(&checkpoint, &data, csv.as_deref()),
        Command::HopTrace {
            checkpoint,
            data,
            story,
            question,
            position,
            csv,
        } => cmd_hop_trace(&checkpoint, &data, story, question, position, csv.as_deref()),
        Command::AvgActivation { checkpoint, data, csv } => cmd_avg_activation(&checkpoint, &data, csv.as_deref()),
        Command::Gradcheck(args) => cmd_gradcheck(&args),
        Command::GenData {
            task,
            stories,
            tokens,
            seed,
            out,
        } => cmd_gen_data(&task, stories, tokens, seed, &out),
        Command::ReproBabi {
            dir,
            config,
            joint,
            csv,
        } => cmd_repro_babi(&dir, &config, joint, &csv),
        Command::ReproLm { config, csv } => cmd_repro_lm(&config, &csv),
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn task_kind(name: &str) -> Result<TaskKind> {
    name.parse().map_err(|e: String| Error::Invalid(e))
}

// ---- data assembly -------------------------------------------------------

/// Indexes raw stories with `vocab`, rejecting unknown words unless allowed.
pub fn index_stories(
    raw: &[RawStory],
    vocab: &Vocabulary,
    task: &str,
    split: Split,
    allow_oov: bool,
) -> Result<QaDataset> {
    if !allow_oov {
        let unknown = raw
            .iter()
            .flat_map(|s| {
                s.sentences.iter().flatten().cloned().chain(
                    s.questions
                        .iter()
                        .flat_map(|q| q.words.iter().cloned().chain([q.answer_key()])),
                )
            })
            .find(|w| vocab.get(w).is_none());
        if let Some(w) = unknown {
            return Err(Error::VocabularyMismatch(format!(
                "`{w}` in {task} is not in the model vocabulary (use --allow-oov to map it to {})",
                vocab.word(vocab.oov())
            )));
        }
    }
    Ok(QaDataset::from_raw(raw, vocab, task, split))
}

/// Synthetic QA train and test stories for a run seed.
pub fn synthetic_qa(kind: TaskKind, train: usize, test: usize, seed: u64) -> (Vec<RawStory>, Vec<RawStory>) {
    let sc = SyntheticConfig::for_kind(kind);
    (
        generate_stories(&sc, train, seed),
        generate_stories(&sc, test, seed ^ TEST_SEED_MASK),
    )
}

/// Synthetic LM corpus: independent train, validation and test streams.
pub fn synthetic_corpus(tokens: usize, seed: u64) -> Result<Corpus> {
    let side = (tokens / 10).max(10);
    corpus_from_text(
        &generate_corpus(tokens, seed),
        &generate_corpus(side, seed.wrapping_add(LM_VALID_SEED)),
        &generate_corpus(side, seed.wrapping_add(LM_TEST_SEED)),
        0,
    )
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn file_label(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

// ---- train ---------------------------------------------------------------

fn cmd_train(config_path: &Path, out: Option<PathBuf>) -> Result<i32> {
    let mut cfg = RunConfig::from_file(config_path)?;
    if let Some(o) = out {
        cfg.output_dir = o;
    }
    let outcome = train_from_config(&cfg)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    outcome.checkpoint.save(dir.join("model.ckpt"))?;
    write_file(&dir.join("report.csv"), outcome.report.to_csv())?;
    write_file(&dir.join("resolved.cfg"), cfg.resolved())?;
    let run = outcome.report.selected_run();
    println!(
        "selected restart {} of {} (score {:.4}), {:.1}s",
        run.restart + 1,
        outcome.report.runs.len(),
        run.score,
        outcome.report.wall_clock.as_secs_f64()
    );
    for (label, value) in &outcome.test {
        println!("{label}: {value:.4}");
    }
    println!("wrote {}", dir.display());
    Ok(0)
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
    /// Held-out metrics: `test error (%)` rows or `perplexity` rows.
    pub test: Vec<(String, f64)>,
}

/// Builds the data named by `cfg`, trains, and evaluates on its test split.
pub fn train_from_config(cfg: &RunConfig) -> Result<TrainOutcome> {
    let model = cfg.model_config();
    match cfg.mode {
        Mode::Qa => {
            let (train_raw, tests): (Vec<Vec<RawStory>>, Vec<(String, Vec<RawStory>)>) = match cfg.data.source {
                Source::Synthetic => {
                    let (tr, te) = synthetic_qa(cfg.data.task, cfg.data.train_stories, cfg.data.test_stories, cfg.seed);
                    (vec![tr], vec![(cfg.data.task.to_string(), te)])
                }
                Source::Files => {
                    let tr = cfg.data.train_paths.iter().map(read_babi).collect::<Result<Vec<_>>>()?;
                    let te = cfg
                        .data
                        .test_paths
                        .iter()
                        .map(|p| Ok((file_label(p), read_babi(p)?)))
                        .collect::<Result<Vec<_>>>()?;
                    (tr, te)
                }
            };
            let all: Vec<RawStory> = train_raw.iter().flatten().cloned().collect();
            if all.is_empty() {
                return Err(Error::EmptyDataset("no training stories".into()));
            }
            let vocab = match cfg.data.source {
                Source::Synthetic => SyntheticConfig::for_kind(cfg.data.task).vocabulary(),
                Source::Files => build_vocab(&all),
            };
            let (mut train, mut valid) = (Vec::new(), Vec::new());
            for (i, stories) in train_raw.iter().enumerate() {
                let (t, v) = split_validation(stories, cfg.qa.validation_fraction, cfg.seed.wrapping_add(i as u64))?;
                train.extend(QaDataset::from_raw(&t, &vocab, "train", Split::Train).examples());
                valid.extend(QaDataset::from_raw(&v, &vocab, "valid", Split::Valid).examples());
            }
            let report = train_qa(&train, &valid, &vocab, &model, &cfg.qa, cfg.seed)?;
            let mut test = Vec::new();
            for (label, raw) in &tests {
                let ds = QaDataset::from_raw(raw, &vocab, label.clone(), Split::Test);
                let m = evaluate_qa(&ds.examples(), &report.params, &model, Attention::Softmax, vocab.oov())?;
                test.push((format!("{label} test error (%)"), m.error_percent()));
            }
            Ok(TrainOutcome {
                checkpoint: Checkpoint {
                    config: model,
                    vocab,
                    params: report.params.clone(),
                    seed: cfg.seed,
                    schedule: cfg.schedule_summary(),
                },
                report,
                test,
            })
        }
        Mode::Lm => {
            let corpus = match cfg.data.source {
                Source::Synthetic => synthetic_corpus(cfg.data.corpus_tokens, cfg.seed)?,
                Source::Files => {
                    let valid = cfg.data.valid_path.as_ref().expect("validated");
                    let test = match cfg.data.test_paths.first() {
                        Some(p) => read_text(p)?,
                        None => String::new(),
                    };
                    let train = cfg
                        .data
                        .train_paths
                        .iter()
                        .map(|p| read_text(p))
                        .collect::<Result<Vec<_>>>()?
                        .join("\n");
                    corpus_from_text(&train, &read_text(valid)?, &test, cfg.data.unk_threshold)?
                }
            };
            let report = train_lm(&corpus.train, &corpus.valid, &corpus.vocab, &model, &cfg.lm, cfg.seed)?;
            let mut test = vec![(
                "valid perplexity".to_owned(),
                evaluate_lm(&corpus.valid, &report.params, &model)?.perplexity(),
            )];
            if corpus.test.len() >= 2 {
                test.push((
                    "test perplexity".to_owned(),
                    evaluate_lm(&corpus.test, &report.params, &model)?.perplexity(),
                ));
            }
            Ok(TrainOutcome {
                checkpoint: Checkpoint {
                    config: model,
                    vocab: corpus.vocab,
                    params: report.params.clone(),
                    seed: cfg.seed,
                    schedule: cfg.schedule_summary(),
                },
                report,
                test,
            })
        }
    }
}

// ---- eval ----------------------------------------------------------------

enum Loaded {
    Qa(Vec<(String, QaDataset)>),
    Lm(Vec<(String, Vec<usize>)>),
}

/// Fraction of unknown tokens above which an LM eval set is rejected.
const MAX_LM_UNKNOWN: f64 = 0.5;

fn load_data(ck: &Checkpoint, data: &DataArgs) -> Result<Loaded> {
    let vocab = &ck.vocab;
    if ck.config.lm_mode {
        if !data.babi.is_empty() {
            return Err(Error::Invalid(
                "language-model checkpoints take --text or --synthetic corpus".into(),
            ));
        }
        let mut sets = Vec::new();
        for p in &data.text {
            sets.push((file_label(p), read_text(p)?));
        }
        if let Some(s) = &data.synthetic {
            if s != "corpus" {
                return Err(Error::Invalid(format!(
                    "`{s}` is a QA task; language models take --synthetic corpus"
                )));
            }
            sets.push(("corpus".into(), generate_corpus(data.tokens, data.data_seed)));
        }
        if sets.is_empty() {
            return Err(Error::Invalid("no dataset given (--text or --synthetic)".into()));
        }
        let mut out = Vec::new();
        for (label, text) in sets {
            let ids: Vec<usize> = text.split_whitespace().map(|w| vocab.index_or_oov(w)).collect();
            let unknown = text.split_whitespace().filter(|w| vocab.get(w).is_none()).count();
            if !ids.is_empty() && unknown as f64 > MAX_LM_UNKNOWN * ids.len() as f64 {
                return Err(Error::VocabularyMismatch(format!(
                    "{unknown} of {} tokens in {label} are outside the model vocabulary",
                    ids.len()
                )));
            }
            out.push((label, ids));
        }
        Ok(Loaded::Lm(out))
    } else {
        if !data.text.is_empty() {
            return Err(Error::Invalid(
                "QA checkpoints take --babi or --synthetic one-fact|two-fact".into(),
            ));
        }
        let mut out = Vec::new();
        for p in &data.babi {
            let label = file_label(p);
            let ds = index_stories(&read_babi(p)?, vocab, &label, Split::Test, data.allow_oov)?;
            out.push((label, ds));
        }
        if let Some(s) = &data.synthetic {
            let kind = task_kind(s)?;
            let raw = generate_stories(&SyntheticConfig::for_kind(kind), data.stories, data.data_seed);
            out.push((s.clone(), index_stories(&raw, vocab, s, Split::Test, data.allow_oov)?));
        }
        if out.is_empty() {
            return Err(Error::Invalid("no dataset given (--babi or --synthetic)".into()));
        }
        Ok(Loaded::Qa(out))
    }
}

/// Evaluation table: QA rows `task,questions,errors,error_pct` plus a mean
/// row; LM rows `split,tokens,cost,perplexity`.
fn eval_table(ck: &Checkpoint, data: &Loaded) -> Result<String> {
    let mut out = String::new();
    match data {
        Loaded::Qa(sets) => {
            out.push_str("task,questions,errors,error_pct\n");
            let mut sum = 0.0;
            for (label, ds) in sets {
                let m = evaluate_qa(
                    &ds.examples(),
                    &ck.params,
                    &ck.config,
                    Attention::Softmax,
                    ck.vocab.oov(),
                )?;
                sum += m.error_percent();
                let _ = writeln!(out, "{label},{},{},{:.2}", m.examples, m.errors, m.error_percent());
            }
            let _ = writeln!(out, "mean,,,{:.2}", sum / sets.len() as f64);
        }
        Loaded::Lm(sets) => {
            out.push_str("split,tokens,cost,perplexity\n");
            for (label, ids) in sets {
                let m = evaluate_lm(ids, &ck.params, &ck.config)?;
                let _ = writeln!(out, "{label},{},{:.6},{:.4}", m.tokens, m.cost, m.perplexity());
            }
        }
    }
    Ok(out)
}

fn cmd_eval(checkpoint: &Path, data: &DataArgs, csv: Option<&Path>) -> Result<i32> {
    let ck = Checkpoint::load(checkpoint)?;
    let loaded = load_data(&ck, data)?;
    let table = eval_table(&ck, &loaded)?;
    print!("{table}");
    if let Some(p) = csv {
        write_file(p, &table)?;
    }
    Ok(0)
}

// ---- inspection ----------------------------------------------------------

fn cmd_hop_trace(
    checkpoint: &Path,
    data: &DataArgs,
    story: usize,
    question: usize,
    position: usize,
    csv: Option<&Path>,
) -> Result<i32> {
    let ck = Checkpoint::load(checkpoint)?;
    let table = match load_data(&ck, data)? {
        Loaded::Qa(sets) => {
            let ds = &sets[0].1;
            let s = ds.stories.get(story).ok_or(Error::IndexOutOfRange {
                index: story,
                size: ds.stories.len(),
            })?;
            qa_hop_trace(s, question, &ck.params, &ck.config, &ck.vocab)?
        }
        Loaded::Lm(sets) => lm_hop_trace(&sets[0].1, position, &ck.params, &ck.config, &ck.vocab)?,
    };
    print!("{}", table.render());
    if let Some(p) = csv {
        write_file(p, table.to_csv())?;
    }
    Ok(0)
}

fn cmd_avg_activation(checkpoint: &Path, data: &DataArgs, csv: Option<&Path>) -> Result<i32> {
    let ck = Checkpoint::load(checkpoint)?;
    let episodes = match load_data(&ck, data)? {
        Loaded::Qa(sets) => {
            let examples: Vec<QaExample> = sets.iter().flat_map(|(_, ds)| ds.examples()).collect();
            qa_episodes(&examples, &ck.config)
        }
        Loaded::Lm(sets) => sets
            .iter()
            .flat_map(|(_, ids)| lm_episodes(ids, &ck.config, ck.vocab.null()))
            .collect(),
    };
    let m = average_activation(&episodes, &ck.params, &ck.config)?;
    let table = activation_csv(&m);
    print!("{table}");
    if let Some(p) = csv {
        write_file(p, &table)?;
    }
    Ok(0)
}

// ---- gradcheck -----------------------------------------------------------

fn single_case(a: &GradArgs) -> Result<GradCheckCase> {
    if a.dim > GRADCHECK_MAX || a.slots > GRADCHECK_MAX {
        return Err(Error::config(
            if a.dim > GRADCHECK_MAX { "dim" } else { "slots" },
            format!("gradcheck accepts at most {GRADCHECK_MAX}"),
        ));
    }
    let config = match a.mode.as_str() {
        "qa" => ModelConfig {
            dim: a.dim,
            hops: a.hops,
            capacity: a.slots.max(1),
            encoding: a.encoding,
            tying: a.tying,
            temporal: a.temporal,
            hop_nonlinearity: a.nonlinearity,
            lm_mode: false,
            relu_half: false,
        },
        "lm" => ModelConfig {
            temporal: a.temporal,
            hop_nonlinearity: a.nonlinearity,
            ..ModelConfig::lm(a.dim, a.hops, a.slots.max(1))
        },
        other => return Err(Error::config("mode", format!("`{other}`: expected qa or lm"))),
    };
    let attention = if a.linear {
        Attention::Linear
    } else {
        Attention::Softmax
    };
    random_case(config, attention, a.slots, a.seed)
}

fn cmd_gradcheck(a: &GradArgs) -> Result<i32> {
    let cases = if a.single {
        vec![single_case(a)?]
    } else {
        default_sweep(a.seed)?
    };
    let mut failed = 0;
    for case in &cases {
        let trace = forward(&case.episode, &case.params, &case.config, case.attention)?;
        let mut analytic = backward(&trace, &case.episode, &case.params, &case.config)?;
        if a.corrupt {
            for g in analytic.tensors_mut() {
                g.as_mut_slice().iter_mut().for_each(|x| *x = *x * 1.01 + 1e-3);
            }
            analytic.zero_null();
        }
        let report = compare_with_finite_differences(
            &analytic,
            &case.episode,
            &case.params,
            &case.config,
            case.attention,
            DEFAULT_EPS,
        )?;
        let ok = report.max_error <= case.tolerance();
        if !ok {
            failed += 1;
        }
        println!(
            "{} {} slots={} max_rel_err={:.3e} (tol {:.0e})",
            if ok { "ok  " } else { "FAIL" },
            describe(&case.config, case.attention),
            case.slots(),
            report.max_error,
            case.tolerance()
        );
        for (name, err) in &report.per_tensor {
            println!("      {name:<18} {err:.3e}");
        }
    }
    println!("{} of {} configurations passed", cases.len() - failed, cases.len());
    Ok(if failed == 0 { 0 } else { 1 })
}

// ---- data generation and full runs ---------------------------------------

fn cmd_gen_data(task: &str, stories: usize, tokens: usize, seed: u64, out: &Path) -> Result<i32> {
    let text = if task == "corpus" {
        generate_corpus(tokens, seed)
    } else {
        write_babi(&generate_stories(
            &SyntheticConfig::for_kind(task_kind(task)?),
            stories,
            seed,
        ))
    };
    write_file(out, text)?;
    println!("wrote {}", out.display());
    Ok(0)
}

/// `(task number, train file, test file)` for every bAbI task in `dir`.
pub fn find_babi_tasks(dir: &Path) -> Result<Vec<(usize, PathBuf, PathBuf)>> {
    let mut found: std::collections::BTreeMap<usize, (Option<PathBuf>, Option<PathBuf>)> = Default::default();
    for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("").to_owned();
        let Some(rest) = name.strip_prefix("qa") else { continue };
        let Some(num) = rest.split('_').next().and_then(|n| n.parse::<usize>().ok()) else {
            continue;
        };
        let slot = found.entry(num).or_default();
        if name.ends_with("_train.txt") {
            slot.0 = Some(path);
        } else if name.ends_with("_test.txt") {
            slot.1 = Some(path);
        }
    }
    let tasks: Vec<_> = found
        .into_iter()
        .filter_map(|(n, (tr, te))| Some((n, tr?, te?)))
        .collect();
    if tasks.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no qaN_*_train.txt/_test.txt pairs in {}",
            dir.display()
        )));
    }
    Ok(tasks)
}

fn cmd_repro_babi(dir: &Path, config: &Path, joint: bool, csv: &Path) -> Result<i32> {
    let base = RunConfig::from_file(config)?;
    if base.mode != Mode::Qa {
        return Err(Error::config("mode", "repro-babi needs a QA config"));
    }
    let tasks = find_babi_tasks(dir)?;
    let with_files = |train: Vec<PathBuf>, test: Vec<PathBuf>| {
        let mut c = base.clone();
        c.data.source = Source::Files;
        c.data.train_paths = train;
        c.data.test_paths = test;
        c
    };
    let mut rows: Vec<(usize, f64)> = Vec::new();
    if joint {
        let cfg = with_files(
            tasks.iter().map(|t| t.1.clone()).collect(),
            tasks.iter().map(|t| t.2.clone()).collect(),
        );
        let outcome = train_from_config(&cfg)?;
        rows.extend(tasks.iter().zip(&outcome.test).map(|(t, (_, e))| (t.0, *e)));
    } else {
        for (n, train, test) in &tasks {
            let outcome = train_from_config(&with_files(vec![train.clone()], vec![test.clone()]))?;
            eprintln!("task {n}: {:.1}%", outcome.test[0].1);
            rows.push((*n, outcome.test[0].1));
        }
    }
    let mut table = String::from("task,error_pct\n");
    for (n, e) in &rows {
        let _ = writeln!(table, "{n},{e:.1}");
    }
    let mean = rows.iter().map(|r| r.1).sum::<f64>() / rows.len() as f64;
    let failed = rows.iter().filter(|r| r.1 > 5.0).count();
    let _ = writeln!(table, "mean,{mean:.1}");
    let _ = writeln!(table, "failed_tasks_over_5pct,{failed}");
    print!("{table}");
    write_file(csv, &table)?;
    Ok(0)
}

fn cmd_repro_lm(configs: &[PathBuf], csv: &Path) -> Result<i32> {
    let mut table = String::from("config,hidden,hops,memory,epochs,valid_perplexity,test_perplexity\n");
    for path in configs {
        let cfg = RunConfig::from_file(path)?;
        if cfg.mode != Mode::Lm {
            return Err(Error::config("mode", format!("{} is not an LM config", path.display())));
        }
        let outcome = train_from_config(&cfg)?;
        let metric = |name: &str| {
            outcome
                .test
                .iter()
                .find(|(l, _)| l == name)
                .map_or(String::new(), |(_, v)| format!("{v:.2}"))
        };
        let _ = writeln!(
            table,
            "{},{},{},{},{},{},{}",
            file_label(path),
            cfg.model.dim,
            cfg.model.hops,
            cfg.model.capacity,
            outcome.report.selected_run().epochs,
            metric("valid perplexity"),
            metric("test perplexity"),
        );
    }
    print!("{table}");
    write_file(csv, &table)?;
    Ok(0)
}
