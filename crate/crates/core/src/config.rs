//! Experiment configuration: `key = value` text files overridden by flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lexicons::Lexicons;
use crate::model::{F1Scope, ModelConfig, OptimizerKind, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Cv3,
    TrainTest,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cv3" => Ok(Mode::Cv3),
            "traintest" => Ok(Mode::TrainTest),
            other => Err(Error::Config(format!("unknown mode {other:?}"))),
        }
    }
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Cv3 => "cv3",
            Mode::TrainTest => "traintest",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Paths {
    pub corpus: Option<PathBuf>,
    pub opinions: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub sentiment: Option<PathBuf>,
    pub prepositions: Option<PathBuf>,
    pub manifest: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub mode: Mode,
    pub jobs: usize,
    /// Position embeddings were set explicitly rather than by encoder default.
    pub positions_explicit: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            paths: Paths::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            mode: Mode::Cv3,
            jobs: 1,
            positions_explicit: false,
        }
    }
}

/// Recognized keys, in the order `describe` prints them.
pub const KEYS: &[&str] = &[
    "corpus",
    "opinions",
    "frames",
    "sentiment",
    "prepositions",
    "embeddings",
    "manifest",
    "cache",
    "checkpoint",
    "out",
    "mode",
    "jobs",
    "encoder",
    "features",
    "n",
    "hidden",
    "filters",
    "window",
    "k",
    "word_dim",
    "polarity_dim",
    "use_position",
    "position_dim",
    "max_distance",
    "max_epochs",
    "eval_period",
    "stop_threshold",
    "lr",
    "optimizer",
    "batch_size",
    "seed",
    "weight_decay",
    "neutral_keep",
    "f1_scope",
];

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("bad value {raw:?} for {key}")))
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {raw:?} for {key}"))),
    }
}

impl ExperimentConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        let path = || Some(PathBuf::from(raw));
        let enc = &mut self.model.encoder;
        let emb = &mut self.model.embedding;
        let tr = &mut self.train;
        match key.trim() {
            "corpus" => self.paths.corpus = path(),
            "opinions" => self.paths.opinions = path(),
            "frames" => self.paths.frames = path(),
            "sentiment" => self.paths.sentiment = path(),
            "prepositions" => self.paths.prepositions = path(),
            "embeddings" => self.model.pretrained = path(),
            "manifest" => self.paths.manifest = path(),
            "cache" => self.paths.cache = path(),
            "checkpoint" => self.paths.checkpoint = path(),
            "out" => self.paths.out = path(),
            "mode" => self.mode = raw.parse()?,
            "jobs" => self.jobs = value(key, raw)?,
            "encoder" => enc.kind = raw.parse()?,
            "features" => enc.features = raw.parse()?,
            "n" => enc.n = value(key, raw)?,
            "hidden" => enc.hidden = value(key, raw)?,
            "filters" => enc.filters = value(key, raw)?,
            "window" => enc.window = value(key, raw)?,
            "k" => enc.k = value(key, raw)?,
            "word_dim" => emb.word_dim = value(key, raw)?,
            "polarity_dim" => emb.polarity_dim = value(key, raw)?,
            "use_position" => {
                emb.use_position = flag(key, raw)?;
                self.positions_explicit = true;
            }
            "position_dim" => emb.position_dim = value(key, raw)?,
            "max_distance" => emb.max_distance = value(key, raw)?,
            "max_epochs" => tr.max_epochs = value(key, raw)?,
            "eval_period" => tr.eval_period = value(key, raw)?,
            "stop_threshold" => tr.stop_threshold = value(key, raw)?,
            "lr" => tr.lr = value(key, raw)?,
            "optimizer" => tr.optimizer = raw.parse::<OptimizerKind>()?,
            "batch_size" => tr.batch_size = value(key, raw)?,
            "seed" => tr.seed = value(key, raw)?,
            "weight_decay" => tr.weight_decay = value(key, raw)?,
            "neutral_keep" => {
                tr.neutral_keep = if raw == "none" { None } else { Some(value(key, raw)?) }
            }
            "f1_scope" => tr.f1_scope = raw.parse::<F1Scope>()?,
            other => return Err(Error::Config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `KEY=VALUE` overrides.
    pub fn apply_overrides<'a>(&mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not KEY=VALUE")))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    /// Fills in defaults that depend on other settings and validates.
    pub fn finalize(&mut self) -> Result<()> {
        if !self.positions_explicit {
            self.model.embedding.use_position = self.model.encoder.kind.default_positions();
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        self.model.encoder.validate()?;
        self.model.embedding.validate()?;
        self.train.validate()
    }

    /// Lexicons from the configured paths; absent paths give empty lexicons.
    /// Every configured path must exist.
    pub fn lexicons(&self) -> Result<Lexicons> {
        let mut lex = Lexicons::default();
        if let Some(p) = &self.paths.frames {
            lex.frames = crate::lexicons::load_frame_lexicon(p)?;
        }
        if let Some(p) = &self.paths.sentiment {
            lex.sentiment = crate::lexicons::load_lemma_set(p)?;
        }
        if let Some(p) = &self.paths.prepositions {
            lex.prepositions = crate::lexicons::load_lemma_set(p)?;
        }
        Ok(lex)
    }

    /// Resolved settings as `key = value` lines, suitable for a config file.
    pub fn describe(&self) -> String {
        let p = |v: &Option<PathBuf>| v.as_ref().map(|p| p.display().to_string());
        let enc = &self.model.encoder;
        let emb = &self.model.embedding;
        let tr = &self.train;
        let mut values: BTreeMap<&str, Option<String>> = BTreeMap::new();
        values.insert("corpus", p(&self.paths.corpus));
        values.insert("opinions", p(&self.paths.opinions));
        values.insert("frames", p(&self.paths.frames));
        values.insert("sentiment", p(&self.paths.sentiment));
        values.insert("prepositions", p(&self.paths.prepositions));
        values.insert("embeddings", p(&self.model.pretrained));
        values.insert("manifest", p(&self.paths.manifest));
        values.insert("cache", p(&self.paths.cache));
        values.insert("checkpoint", p(&self.paths.checkpoint));
        values.insert("out", p(&self.paths.out));
        values.insert("mode", Some(self.mode.name().into()));
        values.insert("jobs", Some(self.jobs.to_string()));
        values.insert("encoder", Some(enc.kind.name().into()));
        values.insert("features", Some(enc.features.name().into()));
        values.insert("n", Some(enc.n.to_string()));
        values.insert("hidden", Some(enc.hidden.to_string()));
        values.insert("filters", Some(enc.filters.to_string()));
        values.insert("window", Some(enc.window.to_string()));
        values.insert("k", Some(enc.k.to_string()));
        values.insert("word_dim", Some(emb.word_dim.to_string()));
        values.insert("polarity_dim", Some(emb.polarity_dim.to_string()));
        values.insert("use_position", Some(emb.use_position.to_string()));
        values.insert("position_dim", Some(emb.position_dim.to_string()));
        values.insert("max_distance", Some(emb.max_distance.to_string()));
        values.insert("max_epochs", Some(tr.max_epochs.to_string()));
        values.insert("eval_period", Some(tr.eval_period.to_string()));
        values.insert("stop_threshold", Some(tr.stop_threshold.to_string()));
        values.insert("lr", Some(tr.lr.to_string()));
        values.insert(
            "optimizer",
            Some(match tr.optimizer {
                OptimizerKind::Sgd => "sgd".into(),
                OptimizerKind::Adam => "adam".into(),
            }),
        );
        values.insert("batch_size", Some(tr.batch_size.to_string()));
        values.insert("seed", Some(tr.seed.to_string()));
        values.insert("weight_decay", Some(tr.weight_decay.to_string()));
        values.insert("neutral_keep", Some(tr.neutral_keep.map_or("none".into(), |v| v.to_string())));
        values.insert(
            "f1_scope",
            Some(match tr.f1_scope {
                F1Scope::PerDocument => "per-document".into(),
                F1Scope::Collection => "collection".into(),
            }),
        );
        let mut out = String::new();
        for key in KEYS {
            if let Some(Some(v)) = values.get(key) {
                writeln!(out, "{key} = {v}").expect("writing to a String");
            }
        }
        out
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str, origin: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected key = value"))?;
        cfg.set(k, v).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
    }
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}
