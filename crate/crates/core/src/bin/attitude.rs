use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use attitude::analysis::{
    default_grid, distributions_csv, export_heatmap, extract_alpha, heatmap_tsv, means_csv, summarize_distributions,
};
use attitude::cache::{read_cache, write_cache};
use attitude::checkpoint::{load_model, save_model};
use attitude::config::{load_config, ExperimentConfig, Mode};
use attitude::corpus::{load_corpus, load_manifest, load_opinions, train_test_split};
use attitude::encoders::{EncoderKind, FeatureMode};
use attitude::gradsuite::{run_suite, SuiteConfig};
use attitude::model::{corpus_vocabulary, evaluate, run_cv, run_train_test, train, AttitudeModel};
use attitude::pipeline::{prepare, PreparedCorpus};
use attitude::synthetic::{
    experiment_model_config, experiment_train_config, generate, write_corpus, SyntheticConfig,
};
use attitude::termizer::LowercaseLemmatizer;
use attitude::{Error, Result};

#[derive(Parser)]
#[command(name = "attitude", version, about = "Sentiment attitude extraction between named entities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Key-value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    encoder: Option<EncoderKind>,
    #[arg(long, global = true)]
    features: Option<FeatureMode>,
    #[arg(long, global = true)]
    mode: Option<Mode>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Any configuration key, e.g. `--set lr=0.005`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Extract and termize contexts into a cache file.
    Prepare(Common),
    /// Train one model and write a checkpoint and its history.
    Train(Common),
    /// Three-fold cross-validation, or the train/test protocol.
    Cv(Common),
    /// Score a checkpoint on prepared contexts.
    Eval(Common),
    /// Attention weight distributions and heatmaps of a checkpoint.
    Analyze(Common),
    /// Finite-difference gradient checks of every encoder.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Write the planted-signal synthetic corpus and a matching config.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 60)]
        docs: usize,
    },
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => load_config(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(k) = self.encoder {
            cfg.model.encoder.kind = k;
        }
        if let Some(f) = self.features {
            cfg.model.encoder.features = f;
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(j) = self.jobs {
            cfg.jobs = j;
        }
        if let Some(o) = &self.out {
            cfg.paths.out = Some(o.clone());
        }
        cfg.apply_overrides(self.overrides.iter().map(String::as_str))?;
        cfg.finalize()?;
        check_inputs(&cfg)?;
        Ok(cfg)
    }

    /// Model settings were given, so a checkpoint must agree with them.
    fn pins_model(&self) -> bool {
        self.config.is_some() || self.encoder.is_some() || self.features.is_some() || !self.overrides.is_empty()
    }
}

/// Every configured input must exist before any work starts.
fn check_inputs(cfg: &ExperimentConfig) -> Result<()> {
    let p = &cfg.paths;
    for path in [&p.corpus, &p.opinions, &p.frames, &p.sentiment, &p.prepositions, &p.manifest, &cfg.model.pretrained]
        .into_iter()
        .flatten()
    {
        if !path.exists() {
            return Err(Error::Io {
                path: path.clone(),
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
            });
        }
    }
    Ok(())
}

fn out_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.paths.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Echoes the seed and writes the resolved configuration next to the outputs.
fn provenance(cfg: &ExperimentConfig, dir: &Path, command: &str) -> Result<()> {
    println!("seed = {}", cfg.train.seed);
    let mut text = format!("command = {command}\n");
    text.push_str(&cfg.describe());
    write(&dir.join("provenance.txt"), &text)
}

fn cache_path(cfg: &ExperimentConfig, dir: &Path) -> PathBuf {
    cfg.paths.cache.clone().unwrap_or_else(|| dir.join("contexts.jsonl"))
}

fn prepare_from_corpus(cfg: &ExperimentConfig) -> Result<PreparedCorpus> {
    let lexicons = cfg.lexicons()?;
    let corpus = cfg
        .paths
        .corpus
        .as_ref()
        .ok_or_else(|| Error::Config("no corpus configured".into()))?;
    let (docs, mut opinions) = load_corpus(corpus)?;
    if let Some(p) = &cfg.paths.opinions {
        opinions = load_opinions(p, &docs)?;
    }
    prepare(&docs, &opinions, &lexicons, &LowercaseLemmatizer, cfg.model.encoder.n)
}

/// The configured cache when it exists, otherwise a fresh preparation.
fn load_prepared(cfg: &ExperimentConfig, dir: &Path) -> Result<PreparedCorpus> {
    let cache = cache_path(cfg, dir);
    if cache.exists() {
        read_cache(&cache)
    } else if cfg.paths.corpus.is_some() {
        prepare_from_corpus(cfg)
    } else {
        Err(Error::Config(format!(
            "no context cache at {} and no corpus configured",
            cache.display()
        )))
    }
}

fn checkpoint_path(cfg: &ExperimentConfig, dir: &Path) -> PathBuf {
    cfg.paths.checkpoint.clone().unwrap_or_else(|| dir.join("model.params"))
}

/// Documents to score: the manifest's test part under the train/test
/// protocol, else all.
fn eval_docs(cfg: &ExperimentConfig, corpus: &PreparedCorpus) -> Result<PreparedCorpus> {
    match (cfg.mode, &cfg.paths.manifest) {
        (Mode::TrainTest, Some(m)) => {
            let manifest = load_manifest(m)?;
            let (_, test) = train_test_split(corpus.docs.iter().map(|d| d.doc_id.as_str()), &manifest)?;
            Ok(corpus.subset(&test))
        }
        (Mode::TrainTest, None) => Err(Error::Config("traintest mode needs a manifest".into())),
        _ => Ok(corpus.clone()),
    }
}

fn cmd_prepare(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    let dir = out_dir(&cfg)?;
    let corpus = prepare_from_corpus(&cfg)?;
    let cache = cache_path(&cfg, &dir);
    write_cache(&cache, &corpus)?;
    let c = corpus.label_counts();
    println!("documents = {}", corpus.docs.len());
    println!("contexts = {}", corpus.samples.len());
    println!("positive = {}", c.positive);
    println!("negative = {}", c.negative);
    println!("neutral = {}", c.neutral);
    println!("dropped = {}", corpus.dropped);
    println!("cache = {}", cache.display());
    Ok(())
}

fn cmd_train(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    let dir = out_dir(&cfg)?;
    provenance(&cfg, &dir, "train")?;
    let corpus = load_prepared(&cfg, &dir)?;
    let ckpt = checkpoint_path(&cfg, &dir);
    let (model, history) = match cfg.mode {
        Mode::TrainTest => {
            let m = cfg
                .paths
                .manifest
                .as_ref()
                .ok_or_else(|| Error::Config("traintest mode needs a manifest".into()))?;
            let out = run_train_test(&corpus, &load_manifest(m)?, &cfg.model, &cfg.train)?;
            println!("test_f1 = {}", out.f1);
            (out.model, out.history)
        }
        Mode::Cv3 => {
            let mut model = AttitudeModel::new(&cfg.model, corpus_vocabulary(&corpus), cfg.train.seed)?;
            let history = train(&mut model, &corpus.samples, &corpus.gold_opinions(), &cfg.train)?;
            (model, history)
        }
    };
    if let Some(f1) = history.final_f1 {
        println!("train_f1 = {f1}");
    }
    println!("epochs = {}", history.epochs().last().copied().unwrap_or(0));
    save_model(&model, &ckpt)?;
    write(&dir.join("history.csv"), &history.to_csv())?;
    println!("checkpoint = {}", ckpt.display());
    Ok(())
}

fn cmd_cv(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    let dir = out_dir(&cfg)?;
    provenance(&cfg, &dir, "cv")?;
    let corpus = load_prepared(&cfg, &dir)?;
    let start = Instant::now();
    match cfg.mode {
        Mode::Cv3 => {
            let out = run_cv(&corpus, 3, &cfg.model, &cfg.train, cfg.jobs)?;
            for f in &out.folds {
                println!("fold {} f1 = {}", f.fold, f.f1);
                write(&dir.join(format!("fold{}_history.csv", f.fold)), &f.history.to_csv())?;
            }
            println!("mean_f1 = {}", out.mean_f1);
            write(&dir.join("cv_folds.csv"), &out.to_csv())?;
        }
        Mode::TrainTest => {
            let m = cfg
                .paths
                .manifest
                .as_ref()
                .ok_or_else(|| Error::Config("traintest mode needs a manifest".into()))?;
            let out = run_train_test(&corpus, &load_manifest(m)?, &cfg.model, &cfg.train)?;
            println!("test_f1 = {}", out.f1);
            write(&dir.join("history.csv"), &out.history.to_csv())?;
            write(&dir.join("traintest.csv"), &format!("split,f1\ntest,{}\n", out.f1))?;
        }
    }
    eprintln!("elapsed {:.1}s", start.elapsed().as_secs_f64());
    Ok(())
}

fn load_checkpoint(common: &Common, cfg: &ExperimentConfig, dir: &Path) -> Result<AttitudeModel> {
    let ckpt = checkpoint_path(cfg, dir);
    load_model(&ckpt, common.pins_model().then_some(&cfg.model))
}

fn cmd_eval(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    let dir = out_dir(&cfg)?;
    println!("seed = {}", cfg.train.seed);
    let model = load_checkpoint(common, &cfg, &dir)?;
    let corpus = eval_docs(&cfg, &load_prepared(&cfg, &dir)?)?;
    let f1 = evaluate(&model, &corpus.samples, &corpus.gold_opinions(), cfg.train.f1_scope)?;
    println!("documents = {}", corpus.docs.len());
    println!("f1 = {f1}");
    Ok(())
}

fn cmd_analyze(common: &Common) -> Result<()> {
    let cfg = common.resolve()?;
    let dir = out_dir(&cfg)?;
    provenance(&cfg, &dir, "analyze")?;
    let model = load_checkpoint(common, &cfg, &dir)?;
    let corpus = eval_docs(&cfg, &load_prepared(&cfg, &dir)?)?;
    let summaries = summarize_distributions(&model, &corpus.samples, &default_grid())?;
    write(&dir.join("distributions.csv"), &distributions_csv(&summaries))?;
    write(&dir.join("means.csv"), &means_csv(&summaries))?;
    let mut heat = String::from("doc_id\tsentence\tsource\ttarget\tposition\tterm\tgroup\tnormalized_weight\n");
    for s in &corpus.samples {
        let alpha = extract_alpha(&model, s)?;
        let rows = export_heatmap(s, &alpha)?;
        for line in heatmap_tsv(&rows).lines().skip(1) {
            writeln!(heat, "{}\t{}\t{}\t{}\t{line}", s.doc_id, s.sentence_idx, s.source, s.target)
                .expect("writing to a String");
        }
    }
    write(&dir.join("heatmaps.tsv"), &heat)?;
    for s in &summaries {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |v| format!("{v:.4}"));
        println!("{} mean_N = {} mean_S = {}", s.group.name(), fmt(s.mean_n), fmt(s.mean_s));
    }
    Ok(())
}

fn cmd_gradcheck(common: &Common, trials: usize) -> Result<bool> {
    let cfg = common.resolve()?;
    println!("seed = {}", cfg.train.seed);
    let suite = SuiteConfig {
        trials,
        seed: cfg.train.seed,
        ..SuiteConfig::default()
    };
    let reports = run_suite(&suite)?;
    for r in &reports {
        println!("{r}");
    }
    Ok(reports.iter().all(|r| r.passed()))
}

fn cmd_synth(common: &Common, docs: usize) -> Result<()> {
    let mut cfg = common.resolve()?;
    let dir = out_dir(&cfg)?;
    let corpus = generate(&SyntheticConfig {
        docs,
        seed: cfg.train.seed,
        ..SyntheticConfig::default()
    })?;
    write_corpus(&corpus, &dir)?;
    let dir = fs::canonicalize(&dir).map_err(|e| Error::Io {
        path: dir.clone(),
        source: e,
    })?;
    let kind = common.encoder.unwrap_or(EncoderKind::AttBiLstm);
    cfg.model = experiment_model_config(kind);
    cfg.train = experiment_train_config(cfg.train.seed);
    cfg.paths.corpus = Some(dir.clone());
    cfg.paths.frames = Some(dir.join("frames.tsv"));
    cfg.paths.sentiment = Some(dir.join("sentiment.txt"));
    cfg.paths.prepositions = Some(dir.join("prepositions.txt"));
    cfg.paths.manifest = Some(dir.join("manifest.tsv"));
    cfg.paths.out = None;
    let mut text = String::from("# synthetic attitude experiment\n");
    // position embeddings follow the encoder unless set explicitly
    for line in cfg.describe().lines().filter(|l| !l.starts_with("use_position ")) {
        writeln!(text, "{line}").expect("writing to a String");
    }
    write(&dir.join("experiment.conf"), &text)?;
    println!("seed = {}", cfg.train.seed);
    println!("documents = {}", corpus.docs.len());
    println!("opinions = {}", corpus.opinions.len());
    println!("vocabulary = {}", corpus.vocabulary_size());
    println!("config = {}", dir.join("experiment.conf").display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Prepare(c) => cmd_prepare(c),
        Command::Train(c) => cmd_train(c),
        Command::Cv(c) => cmd_cv(c),
        Command::Eval(c) => cmd_eval(c),
        Command::Analyze(c) => cmd_analyze(c),
        Command::Gradcheck { common, trials } => match cmd_gradcheck(common, *trials) {
            Ok(true) => Ok(()),
            Ok(false) => {
                eprintln!("error: gradient check exceeded tolerance");
                return ExitCode::from(3);
            }
            Err(e) => Err(e),
        },
        Command::Synth { common, docs } => cmd_synth(common, *docs),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
