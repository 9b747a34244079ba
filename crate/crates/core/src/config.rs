//! Flat `key=value` run configuration.
//!
//! Keys are applied in order: `mode` and `preset` first (they pick the
//! defaults), then the remaining keys. Environment variables named
//! `MEMN2N_<KEY>` (upper case) override file values.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::TaskKind;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Tying};
use crate::train::{ClipPolicy, LmSchedule, QaSchedule};

pub const ENV_PREFIX: &str = "MEMN2N_";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Qa,
    Lm,
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "qa" => Ok(Mode::Qa),
            "lm" => Ok(Mode::Lm),
            _ => Err(format!("unknown mode `{s}` (expected qa or lm)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Qa => "qa",
            Mode::Lm => "lm",
        })
    }
}

/// Where training data comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    /// Built-in generator (QA stories or an LM corpus).
    Synthetic,
    /// bAbI task files (QA) or tokenized text files (LM).
    Files,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: Source,
    pub task: TaskKind,
    pub train_stories: usize,
    pub test_stories: usize,
    pub corpus_tokens: usize,
    /// Comma-separated in the file; several QA files are trained jointly.
    pub train_paths: Vec<PathBuf>,
    pub valid_path: Option<PathBuf>,
    pub test_paths: Vec<PathBuf>,
    pub unk_threshold: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub preset: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub qa: QaSchedule,
    pub lm: LmSchedule,
    pub data: DataConfig,
}

const QA_KEYS: &[&str] = &[
    "mode",
    "preset",
    "seed",
    "output_dir",
    "dim",
    "hops",
    "capacity",
    "encoding",
    "tying",
    "temporal",
    "hop_nonlinearity",
    "lr",
    "anneal_every",
    "anneal_factor",
    "epochs",
    "batch_size",
    "clip_norm",
    "restarts",
    "init_sigma",
    "linear_start",
    "ls_lr",
    "ls_patience",
    "ls_max_epochs",
    "random_noise",
    "noise_fraction",
    "validation_fraction",
    "dataset",
    "task",
    "train_stories",
    "test_stories",
    "train_path",
    "test_path",
];

const LM_KEYS: &[&str] = &[
    "mode",
    "preset",
    "seed",
    "output_dir",
    "dim",
    "hops",
    "capacity",
    "temporal",
    "relu_half",
    "lr",
    "anneal_factor",
    "min_lr",
    "epochs",
    "batch_size",
    "clip_norm",
    "restarts",
    "init_sigma",
    "dataset",
    "corpus_tokens",
    "train_path",
    "valid_path",
    "test_path",
    "unk_threshold",
];

impl RunConfig {
    /// Paper defaults for `mode`.
    pub fn defaults(mode: Mode) -> Self {
        let data = DataConfig {
            source: Source::Synthetic,
            task: TaskKind::OneFact,
            train_stories: 1000,
            test_stories: 200,
            corpus_tokens: 50_000,
            train_paths: Vec::new(),
            valid_path: None,
            test_paths: Vec::new(),
            unk_threshold: 0,
        };
        Self {
            mode,
            preset: "per_task".into(),
            seed: 1,
            output_dir: PathBuf::from("out"),
            model: match mode {
                Mode::Qa => ModelConfig::qa(),
                Mode::Lm => ModelConfig::lm(150, 6, 100),
            },
            qa: QaSchedule::per_task(),
            lm: LmSchedule::default(),
            data,
        }
    }

    pub fn keys(&self) -> &'static [&'static str] {
        match self.mode {
            Mode::Qa => QA_KEYS,
            Mode::Lm => LM_KEYS,
        }
    }

    /// Parses a config file body and applies `MEMN2N_*` overrides from `env`.
    pub fn parse<I>(text: &str, env: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut pairs: BTreeMap<String, String> = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: format!("expected key=value, found `{line}`"),
            })?;
            pairs.insert(k.trim().to_owned(), v.trim().to_owned());
        }
        for (k, v) in env {
            if let Some(key) = k.strip_prefix(ENV_PREFIX) {
                pairs.insert(key.to_ascii_lowercase(), v);
            }
        }
        Self::from_pairs(&pairs)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, std::env::vars())
    }

    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let mode = match pairs.get("mode") {
            Some(v) => v.parse().map_err(|e: String| Error::config("mode", e))?,
            None => Mode::Qa,
        };
        let mut cfg = Self::defaults(mode);
        if let Some(p) = pairs.get("preset") {
            cfg.apply("preset", p)?;
        }
        for (k, v) in pairs {
            if k != "mode" && k != "preset" {
                cfg.apply(k, v)?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        if !self.keys().contains(&key) {
            let other = match self.mode {
                Mode::Qa => LM_KEYS,
                Mode::Lm => QA_KEYS,
            };
            let why = if other.contains(&key) {
                format!("not used in {} mode", self.mode)
            } else {
                "unknown key".to_owned()
            };
            return Err(Error::config(key, why));
        }
        fn val<T: FromStr>(key: &str, v: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            v.parse::<T>().map_err(|e| Error::config(key, format!("`{v}`: {e}")))
        }
        let paths = |v: &str| -> Vec<PathBuf> {
            v.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(PathBuf::from)
                .collect()
        };
        let qa = self.mode == Mode::Qa;
        match key {
            "preset" => {
                self.qa = match value {
                    "per_task" => QaSchedule::per_task(),
                    "joint_1k" => QaSchedule::joint_1k(),
                    "joint_10k" => QaSchedule::joint_10k(),
                    _ => {
                        return Err(Error::config(
                            key,
                            format!("`{value}`: expected per_task, joint_1k or joint_10k"),
                        ))
                    }
                };
                self.preset = value.to_owned();
            }
            "seed" => self.seed = val(key, value)?,
            "output_dir" => self.output_dir = PathBuf::from(value),
            "dim" => self.model.dim = val(key, value)?,
            "hops" => self.model.hops = val(key, value)?,
            "capacity" => self.model.capacity = val(key, value)?,
            "encoding" => self.model.encoding = val(key, value)?,
            "tying" => self.model.tying = val(key, value)?,
            "temporal" => self.model.temporal = val(key, value)?,
            "hop_nonlinearity" => self.model.hop_nonlinearity = val(key, value)?,
            "relu_half" => self.model.relu_half = val(key, value)?,
            "lr" if qa => self.qa.lr = val(key, value)?,
            "lr" => self.lm.lr = val(key, value)?,
            "anneal_every" => self.qa.anneal_every = val(key, value)?,
            "anneal_factor" if qa => self.qa.anneal_factor = val(key, value)?,
            "anneal_factor" => self.lm.anneal_factor = val(key, value)?,
            "min_lr" => self.lm.min_lr = val(key, value)?,
            "epochs" if qa => self.qa.epochs = val(key, value)?,
            "epochs" => self.lm.max_epochs = val(key, value)?,
            "batch_size" if qa => self.qa.batch_size = val(key, value)?,
            "batch_size" => self.lm.batch_size = val(key, value)?,
            "clip_norm" => {
                let n: f64 = val(key, value)?;
                let policy = if n <= 0.0 {
                    ClipPolicy::None
                } else if qa {
                    ClipPolicy::PerTensor(n)
                } else {
                    ClipPolicy::Global(n)
                };
                if qa {
                    self.qa.clip = policy;
                } else {
                    self.lm.clip = policy;
                }
            }
            "restarts" if qa => self.qa.restarts = val(key, value)?,
            "restarts" => self.lm.restarts = val(key, value)?,
            "init_sigma" if qa => self.qa.init_sigma = val(key, value)?,
            "init_sigma" => self.lm.init_sigma = val(key, value)?,
            "linear_start" => self.qa.linear_start = val(key, value)?,
            "ls_lr" => self.qa.ls_lr = val(key, value)?,
            "ls_patience" => self.qa.ls_patience = val(key, value)?,
            "ls_max_epochs" => self.qa.ls_max_epochs = val(key, value)?,
            "random_noise" => self.qa.random_noise = val(key, value)?,
            "noise_fraction" => self.qa.noise_fraction = val(key, value)?,
            "validation_fraction" => self.qa.validation_fraction = val(key, value)?,
            "dataset" => {
                self.data.source = match (value, qa) {
                    ("synthetic", _) => Source::Synthetic,
                    ("babi", true) | ("text", false) => Source::Files,
                    _ => {
                        let files = if qa { "babi" } else { "text" };
                        return Err(Error::config(key, format!("`{value}`: expected synthetic or {files}")));
                    }
                }
            }
            "task" => self.data.task = val(key, value)?,
            "train_stories" => self.data.train_stories = val(key, value)?,
            "test_stories" => self.data.test_stories = val(key, value)?,
            "corpus_tokens" => self.data.corpus_tokens = val(key, value)?,
            "train_path" => self.data.train_paths = paths(value),
            "valid_path" => self.data.valid_path = Some(PathBuf::from(value)).filter(|p| !p.as_os_str().is_empty()),
            "test_path" => self.data.test_paths = paths(value),
            "unk_threshold" => self.data.unk_threshold = val(key, value)?,
            _ => unreachable!("key table and match arms disagree on `{key}`"),
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.mode == Mode::Lm {
            self.model_lm_checks()?;
        }
        let model = self.model_config();
        model.validate()?;
        if self.data.source == Source::Files {
            if self.data.train_paths.is_empty() {
                return Err(Error::config("train_path", "required when reading dataset files"));
            }
            if self.mode == Mode::Lm && self.data.valid_path.is_none() {
                return Err(Error::config("valid_path", "required when reading dataset files"));
            }
        }
        let positive = |key: &str, v: usize| {
            if v == 0 {
                Err(Error::config(key, "must be at least 1"))
            } else {
                Ok(())
            }
        };
        match self.mode {
            Mode::Qa => {
                positive("batch_size", self.qa.batch_size)?;
                positive("restarts", self.qa.restarts)?;
                positive("anneal_every", self.qa.anneal_every)?;
                if !(0.0..1.0).contains(&self.qa.validation_fraction) {
                    return Err(Error::config("validation_fraction", "must be in [0, 1)"));
                }
                if self.data.source == Source::Synthetic {
                    positive("train_stories", self.data.train_stories)?;
                }
            }
            Mode::Lm => {
                positive("batch_size", self.lm.batch_size)?;
                positive("restarts", self.lm.restarts)?;
                if self.lm.anneal_factor <= 1.0 {
                    return Err(Error::config(
                        "anneal_factor",
                        "must exceed 1 (the rate is divided by it)",
                    ));
                }
                if self.data.source == Source::Synthetic && self.data.corpus_tokens < 10 {
                    return Err(Error::config("corpus_tokens", "must be at least 10"));
                }
            }
        }
        Ok(())
    }

    fn model_lm_checks(&self) -> Result<()> {
        if self.model.tying != Tying::LayerWise {
            return Err(Error::config("tying", "language models use layer-wise tying"));
        }
        Ok(())
    }

    /// The model configuration with the mode flag applied.
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            lm_mode: self.mode == Mode::Lm,
            ..self.model.clone()
        }
    }

    /// Every key relevant to the mode with its resolved value; parses back
    /// to the same configuration.
    pub fn resolved(&self) -> String {
        let mut out = String::new();
        for key in self.keys() {
            let _ = writeln!(out, "{key}={}", self.value_of(key));
        }
        out
    }

    fn value_of(&self, key: &str) -> String {
        let join = |ps: &[PathBuf]| ps.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",");
        let clip = |c: ClipPolicy| match c {
            ClipPolicy::None => "0".to_owned(),
            ClipPolicy::PerTensor(n) | ClipPolicy::Global(n) => n.to_string(),
        };
        let (m, q, l, d) = (&self.model, &self.qa, &self.lm, &self.data);
        let qa = self.mode == Mode::Qa;
        match key {
            "mode" => self.mode.to_string(),
            "preset" => self.preset.clone(),
            "seed" => self.seed.to_string(),
            "output_dir" => self.output_dir.display().to_string(),
            "dim" => m.dim.to_string(),
            "hops" => m.hops.to_string(),
            "capacity" => m.capacity.to_string(),
            "encoding" => m.encoding.to_string(),
            "tying" => m.tying.to_string(),
            "temporal" => m.temporal.to_string(),
            "hop_nonlinearity" => m.hop_nonlinearity.to_string(),
            "relu_half" => m.relu_half.to_string(),
            "lr" if qa => q.lr.to_string(),
            "lr" => l.lr.to_string(),
            "anneal_every" => q.anneal_every.to_string(),
            "anneal_factor" if qa => q.anneal_factor.to_string(),
            "anneal_factor" => l.anneal_factor.to_string(),
            "min_lr" => l.min_lr.to_string(),
            "epochs" if qa => q.epochs.to_string(),
            "epochs" => l.max_epochs.to_string(),
            "batch_size" if qa => q.batch_size.to_string(),
            "batch_size" => l.batch_size.to_string(),
            "clip_norm" if qa => clip(q.clip),
            "clip_norm" => clip(l.clip),
            "restarts" if qa => q.restarts.to_string(),
            "restarts" => l.restarts.to_string(),
            "init_sigma" if qa => q.init_sigma.to_string(),
            "init_sigma" => l.init_sigma.to_string(),
            "linear_start" => q.linear_start.to_string(),
            "ls_lr" => q.ls_lr.to_string(),
            "ls_patience" => q.ls_patience.to_string(),
            "ls_max_epochs" => q.ls_max_epochs.to_string(),
            "random_noise" => q.random_noise.to_string(),
            "noise_fraction" => q.noise_fraction.to_string(),
            "validation_fraction" => q.validation_fraction.to_string(),
            "dataset" => match (d.source, qa) {
                (Source::Synthetic, _) => "synthetic",
                (Source::Files, true) => "babi",
                (Source::Files, false) => "text",
            }
            .to_owned(),
            "task" => d.task.to_string(),
            "train_stories" => d.train_stories.to_string(),
            "test_stories" => d.test_stories.to_string(),
            "corpus_tokens" => d.corpus_tokens.to_string(),
            "train_path" => join(&d.train_paths),
            "valid_path" => d
                .valid_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "test_path" => join(&d.test_paths),
            "unk_threshold" => d.unk_threshold.to_string(),
            _ => unreachable!("no value for `{key}`"),
        }
    }

    /// One-line schedule summary stored in checkpoints.
    pub fn schedule_summary(&self) -> String {
        self.resolved()
            .lines()
            .filter(|l| {
                let k = l.split('=').next().unwrap_or("");
                !matches!(k, "output_dir" | "train_path" | "valid_path" | "test_path")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Encoding;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::parse(text, Vec::new())
    }

    #[test]
    fn defaults_are_the_published_constants() {
        let c = parse("").unwrap();
        assert_eq!(c.mode, Mode::Qa);
        assert_eq!(c.qa, QaSchedule::per_task());
        assert_eq!(c.model, ModelConfig::qa());
        let l = parse("mode = lm").unwrap();
        assert_eq!(l.lm, LmSchedule::default());
        assert!(l.model_config().lm_mode);
    }

    #[test]
    fn comments_and_overrides() {
        let c = RunConfig::parse(
            "# header\ndim=8 # trailing\nencoding=bow\n",
            vec![("MEMN2N_DIM".into(), "12".into()), ("HOME".into(), "/x".into())],
        )
        .unwrap();
        assert_eq!(c.model.dim, 12);
        assert_eq!(c.model.encoding, Encoding::BagOfWords);
    }

    #[test]
    fn unknown_and_wrong_mode_keys_name_the_key() {
        let key = |r: Result<RunConfig>| match r {
            Err(Error::Config { key, .. }) => key,
            other => panic!("{other:?}"),
        };
        assert_eq!(key(parse("learning_rate=0.1")), "learning_rate");
        assert_eq!(key(parse("mode=lm\nls_lr=0.1")), "ls_lr");
        assert_eq!(key(parse("dim=ten")), "dim");
        assert_eq!(key(parse("dataset=babi")), "train_path");
        assert_eq!(
            key(RunConfig::parse("", vec![("MEMN2N_BOGUS".into(), "1".into())])),
            "bogus"
        );
        assert!(matches!(parse("dim"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn preset_applies_before_explicit_keys() {
        let c = parse("epochs=7\npreset=joint_10k").unwrap();
        assert_eq!((c.qa.epochs, c.qa.anneal_every), (7, 5));
    }

    #[test]
    fn resolved_echo_round_trips() {
        for text in [
            "",
            "mode=lm\ndataset=text\ntrain_path=a.txt\nvalid_path=b.txt\nclip_norm=0",
            "dataset=babi\ntrain_path=x,y\nlinear_start=true",
        ] {
            let c = parse(text).unwrap();
            assert_eq!(parse(&c.resolved()).unwrap(), c, "{text}");
        }
    }
}
