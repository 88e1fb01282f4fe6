//! Classification head, training with the train-F1 stopping protocol,
//! document-level opinion aggregation, macro-F1 and the experiment drivers.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{split_counts, train_test_split, Opinion, OpinionKey, Part};
use crate::embedding::{uniform, Embedder, EmbeddingConfig, Vocabulary};
use crate::encoders::{Encoded, Encoder, EncoderConfig, EncoderOutput};
use crate::error::{Error, Result};
use crate::pipeline::{ContextSample, PreparedCorpus};
use crate::sentiment::Sentiment;
use crate::tensorgrad::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::termizer::TermSequence;

pub const CLASSES: usize = 3;

#[derive(Clone, Debug)]
pub struct ClassifierHead {
    pub w: ParamId,
    pub b: ParamId,
    pub z: usize,
}

impl ClassifierHead {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, z: usize) -> Result<Self> {
        let limit = (6.0 / (z + CLASSES) as f64).sqrt();
        Ok(ClassifierHead {
            w: store.add("head.w", uniform(rng, &[z, CLASSES], limit))?,
            b: store.add("head.b", Tensor::zeros(&[CLASSES]))?,
            z,
        })
    }

    /// ρ = softmax(tanh(s) · W + b).
    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, s: Var) -> Result<Var> {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        head_probs(tape, s, w, b)
    }
}

fn head_probs(tape: &mut Tape, s: Var, w: Var, b: Var) -> Result<Var> {
    let (z, c) = tape.value(w).dims2();
    let len = tape.value(s).len();
    if len != z || c != CLASSES || tape.value(b).len() != CLASSES {
        return Err(Error::shape(
            "head",
            format!("context vector of size {len} for a {z}×{c} head"),
        ));
    }
    let s = tape.reshape(s, &[z])?;
    let squashed = tape.tanh(s);
    let logits = tape.matmul(squashed, w)?;
    let logits = tape.add(logits, b)?;
    tape.softmax(logits)
}

/// Class probabilities of one context, ordered positive, negative, neutral.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub probs: [f64; CLASSES],
}

impl Prediction {
    pub fn label(&self) -> Sentiment {
        argmax_label(&self.probs)
    }
}

/// Argmax over the three classes; any tie for the maximum yields neutral.
pub fn argmax_label(p: &[f64; CLASSES]) -> Sentiment {
    let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut winners = (0..CLASSES).filter(|&i| p[i] == max);
    match (winners.next(), winners.next()) {
        (Some(i), None) => Sentiment::from_index(i).expect("class index"),
        _ => Sentiment::Neutral,
    }
}

/// Evaluates the head on a plain vector.
pub fn head_forward(s: &[f64], w: &Tensor, b: &Tensor) -> Result<Prediction> {
    let mut tape = Tape::new();
    let s = tape.leaf(Tensor::vector(s.to_vec())?);
    let w = tape.leaf(w.clone());
    let b = tape.leaf(b.clone());
    let p = head_probs(&mut tape, s, w, b)?;
    let d = tape.value(p).data();
    Ok(Prediction {
        probs: [d[0], d[1], d[2]],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[derive(Default)]
pub struct ModelConfig {
    pub embedding: EmbeddingConfig,
    pub encoder: EncoderConfig,
    /// Optional `token v1 … vm` word vectors.
    #[serde(default)]
    pub pretrained: Option<PathBuf>,
}


#[derive(Clone, Debug)]
pub struct AttitudeModel {
    pub cfg: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub embedder: Embedder,
    pub encoder: Encoder,
    pub head: ClassifierHead,
}

impl AttitudeModel {
    pub fn new(cfg: &ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let embedder = Embedder::new(&mut store, &mut rng, &cfg.embedding, &vocab)?;
        let encoder = Encoder::new(&mut store, &mut rng, &cfg.encoder, embedder.row_width())?;
        let head = ClassifierHead::new(&mut store, &mut rng, encoder.output_size())?;
        if let Some(path) = &cfg.pretrained {
            embedder.load_pretrained(&mut store, &vocab, path)?;
        }
        Ok(AttitudeModel {
            cfg: cfg.clone(),
            vocab,
            store,
            embedder,
            encoder,
            head,
        })
    }

    pub fn n(&self) -> usize {
        self.cfg.encoder.n
    }

    /// Records the forward pass on `tape`; returns ρ and the encoder output.
    pub fn forward(&self, tape: &mut Tape, seq: &TermSequence) -> Result<(Var, Encoded)> {
        let ctx = self.embedder.embed(tape, &self.store, &self.vocab, seq, self.n())?;
        let enc = self.encoder.encode(tape, &self.store, &ctx)?;
        let probs = self.head.forward(tape, &self.store, enc.s)?;
        Ok((probs, enc))
    }

    pub fn loss(&self, tape: &mut Tape, seq: &TermSequence, label: Sentiment) -> Result<Var> {
        let (probs, _) = self.forward(tape, seq)?;
        tape.cross_entropy(probs, label.index())
    }

    pub fn predict(&self, seq: &TermSequence) -> Result<Prediction> {
        Ok(self.predict_full(seq)?.0)
    }

    /// Prediction plus the materialized encoder output (α padded to n).
    pub fn predict_full(&self, seq: &TermSequence) -> Result<(Prediction, EncoderOutput)> {
        let mut tape = Tape::new();
        let (probs, enc) = self.forward(&mut tape, seq)?;
        let d = tape.value(probs).data();
        let prediction = Prediction {
            probs: [d[0], d[1], d[2]],
        };
        Ok((prediction, enc.materialize(&tape, self.n())))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum F1Scope {
    /// Class-macro F1 per document, averaged over documents.
    PerDocument,
    /// Counts pooled over the whole collection.
    Collection,
}

impl FromStr for F1Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-document" | "document" => Ok(F1Scope::PerDocument),
            "collection" => Ok(F1Scope::Collection),
            other => Err(Error::Config(format!("unknown F1 scope {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub eval_period: usize,
    /// Training stops once train F1 strictly exceeds this value.
    pub stop_threshold: f64,
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub batch_size: usize,
    pub seed: u64,
    pub weight_decay: f64,
    /// Fraction of neutral samples kept per epoch; `None` keeps all.
    pub neutral_keep: Option<f64>,
    pub f1_scope: F1Scope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 150,
            eval_period: 10,
            stop_threshold: 0.85,
            lr: 1e-3,
            optimizer: OptimizerKind::Adam,
            batch_size: 8,
            seed: 0,
            weight_decay: 0.0,
            neutral_keep: None,
            f1_scope: F1Scope::PerDocument,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.eval_period == 0 {
            return Err(Error::Config("eval_period must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..=1.0).contains(&self.stop_threshold) {
            return Err(Error::Config(format!(
                "stop_threshold must lie in [0, 1], got {}",
                self.stop_threshold
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if let Some(k) = self.neutral_keep {
            if !(k > 0.0 && k <= 1.0) {
                return Err(Error::Config(format!("neutral_keep must lie in (0, 1], got {k}")));
            }
        }
        Ok(())
    }

    /// Whether train F1 is measured after `epoch`.
    pub fn is_measurement(&self, epoch: usize) -> bool {
        epoch > 0 && (epoch.is_multiple_of(self.eval_period) || epoch == self.max_epochs)
    }
}

pub fn should_stop(epoch: usize, train_f1: f64, cfg: &TrainConfig) -> bool {
    train_f1 > cfg.stop_threshold || epoch >= cfg.max_epochs
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub epoch: usize,
    pub train_f1: f64,
    /// Mean cross-entropy over the epoch just finished.
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunHistory {
    pub measurements: Vec<Measurement>,
    pub final_f1: Option<f64>,
}

impl RunHistory {
    pub fn epochs(&self) -> Vec<usize> {
        self.measurements.iter().map(|m| m.epoch).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_f1,loss\n");
        for m in &self.measurements {
            writeln!(out, "{},{},{}", m.epoch, m.train_f1, m.loss).expect("writing to a String");
        }
        out
    }
}

struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl Optimizer {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(cfg: &TrainConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|(_, p)| vec![0.0; p.value.len()]).collect();
        Optimizer {
            kind: cfg.optimizer,
            lr: cfg.lr,
            weight_decay: cfg.weight_decay,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// Applies the accumulated gradients scaled by `scale`.
    fn step(&mut self, store: &mut ParamStore, scale: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t);
        let bc2 = 1.0 - Self::BETA2.powi(self.t);
        for (pi, p) in store.iter_mut().enumerate() {
            let grads = p.grad.data().to_vec();
            let values = p.value.data_mut();
            for (j, (x, g)) in values.iter_mut().zip(grads).enumerate() {
                let g = g * scale + self.weight_decay * *x;
                match self.kind {
                    OptimizerKind::Sgd => *x -= self.lr * g,
                    OptimizerKind::Adam => {
                        let m = &mut self.m[pi][j];
                        let v = &mut self.v[pi][j];
                        *m = Self::BETA1 * *m + (1.0 - Self::BETA1) * g;
                        *v = Self::BETA2 * *v + (1.0 - Self::BETA2) * g * g;
                        *x -= self.lr * (*m / bc1) / ((*v / bc2).sqrt() + Self::EPS);
                    }
                }
            }
        }
    }
}

/// Mini-batch training on mean cross-entropy. Train macro-F1 is measured
/// every `eval_period` epochs (and at `max_epochs`); training stops when
/// [`should_stop`] holds.
pub fn train(
    model: &mut AttitudeModel,
    samples: &[ContextSample],
    gold: &[Opinion],
    cfg: &TrainConfig,
) -> Result<RunHistory> {
    cfg.validate()?;
    if samples.is_empty() {
        return Err(Error::Data("no training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Optimizer::new(cfg, &model.store);
    let mut history = RunHistory::default();
    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..samples.len())
            .filter(|&i| match cfg.neutral_keep {
                Some(keep) if samples[i].label == Sentiment::Neutral => rng.gen::<f64>() < keep,
                _ => true,
            })
            .collect();
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            model.store.zero_grad();
            for &i in batch {
                let s = &samples[i];
                let mut tape = Tape::new();
                let loss = model.loss(&mut tape, &s.seq, s.label)?;
                let value = tape.value(loss).data()[0];
                if !value.is_finite() {
                    return Err(Error::NonFinite(format!(
                        "loss {value} at epoch {epoch} on {} sentence {} ({} → {})",
                        s.doc_id, s.sentence_idx, s.source, s.target
                    )));
                }
                total += value;
                tape.backward(loss, &mut model.store)?;
            }
            opt.step(&mut model.store, 1.0 / batch.len() as f64);
        }
        if cfg.is_measurement(epoch) {
            let train_f1 = evaluate(model, samples, gold, cfg.f1_scope)?;
            history.measurements.push(Measurement {
                epoch,
                train_f1,
                loss: total / order.len().max(1) as f64,
            });
            if should_stop(epoch, train_f1, cfg) {
                break;
            }
        }
    }
    Ok(history)
}

/// Context-level predictions keyed by opinion.
pub fn predict_contexts(model: &AttitudeModel, samples: &[ContextSample]) -> Result<Vec<(OpinionKey, Prediction)>> {
    samples.iter().map(|s| Ok((s.key(), model.predict(&s.seq)?))).collect()
}

/// Mean probability vector per opinion key, then argmax with ties → neutral.
pub fn aggregate_opinions<I>(predictions: I) -> BTreeMap<OpinionKey, Sentiment>
where
    I: IntoIterator<Item = (OpinionKey, [f64; CLASSES])>,
{
    let mut sums: BTreeMap<OpinionKey, ([f64; CLASSES], usize)> = BTreeMap::new();
    for (key, p) in predictions {
        let e = sums.entry(key).or_insert(([0.0; CLASSES], 0));
        for c in 0..CLASSES {
            e.0[c] += p[c];
        }
        e.1 += 1;
    }
    sums.into_iter()
        .map(|(k, (s, n))| {
            let mean = s.map(|v| v / n as f64);
            (k, argmax_label(&mean))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ClassCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl ClassCounts {
    /// F1 with each ratio taken as 0 when its denominator is 0.
    pub fn f1(&self) -> f64 {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        }
    }
}

/// Positive and negative confusion counts; keys without a prediction count
/// as predicted neutral.
pub fn confusion(predicted: &BTreeMap<OpinionKey, Sentiment>, gold: &[Opinion]) -> [ClassCounts; 2] {
    let gold_map: BTreeMap<OpinionKey, Sentiment> = gold.iter().map(|o| (o.key(), o.label)).collect();
    let keys: BTreeSet<&OpinionKey> = gold_map.keys().chain(predicted.keys()).collect();
    let mut counts = [ClassCounts::default(); 2];
    for key in keys {
        let g = gold_map.get(key).copied().unwrap_or(Sentiment::Neutral);
        let p = predicted.get(key).copied().unwrap_or(Sentiment::Neutral);
        for (ci, class) in [Sentiment::Positive, Sentiment::Negative].into_iter().enumerate() {
            match (g == class, p == class) {
                (true, true) => counts[ci].tp += 1,
                (false, true) => counts[ci].fp += 1,
                (true, false) => counts[ci].fn_ += 1,
                (false, false) => {}
            }
        }
    }
    counts
}

fn class_macro(c: &[ClassCounts; 2]) -> f64 {
    (c[0].f1() + c[1].f1()) / 2.0
}

/// Macro-F1 over the positive and negative classes.
pub fn macro_f1(predicted: &BTreeMap<OpinionKey, Sentiment>, gold: &[Opinion], scope: F1Scope) -> f64 {
    match scope {
        F1Scope::Collection => class_macro(&confusion(predicted, gold)),
        F1Scope::PerDocument => {
            let mut docs: BTreeMap<&str, (BTreeMap<OpinionKey, Sentiment>, Vec<Opinion>)> = BTreeMap::new();
            for o in gold {
                docs.entry(o.doc_id.as_str()).or_default().1.push(o.clone());
            }
            for (k, &v) in predicted {
                docs.entry(k.doc_id.as_str()).or_default().0.insert(k.clone(), v);
            }
            if docs.is_empty() {
                return 0.0;
            }
            let total: f64 = docs.values().map(|(p, g)| class_macro(&confusion(p, g))).sum();
            total / docs.len() as f64
        }
    }
}

/// Predicts every sample, aggregates per opinion and scores against `gold`.
pub fn evaluate(model: &AttitudeModel, samples: &[ContextSample], gold: &[Opinion], scope: F1Scope) -> Result<f64> {
    let preds = predict_contexts(model, samples)?;
    let opinions = aggregate_opinions(preds.into_iter().map(|(k, p)| (k, p.probs)));
    Ok(macro_f1(&opinions, gold, scope))
}

/// Vocabulary over every prepared context.
pub fn corpus_vocabulary(corpus: &PreparedCorpus) -> Vocabulary {
    Vocabulary::from_sequences(corpus.samples.iter().map(|s| &s.seq))
}

#[derive(Clone, Debug)]
pub struct FoldOutcome {
    pub fold: usize,
    pub f1: f64,
    pub history: RunHistory,
    pub test_docs: Vec<String>,
    pub model: AttitudeModel,
}

#[derive(Clone, Debug)]
pub struct CvOutcome {
    pub folds: Vec<FoldOutcome>,
    pub mean_f1: f64,
}

impl CvOutcome {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fold,f1\n");
        for f in &self.folds {
            writeln!(out, "{},{}", f.fold, f.f1).expect("writing to a String");
        }
        out
    }
}

fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(fold as u64)
}

/// Trains on `train_docs`, evaluates on `test_docs`.
pub fn train_and_evaluate(
    corpus: &PreparedCorpus,
    vocab: &Vocabulary,
    train_docs: &[String],
    test_docs: &[String],
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<(AttitudeModel, RunHistory, f64)> {
    let train_part = corpus.subset(train_docs);
    let test_part = corpus.subset(test_docs);
    let mut model = AttitudeModel::new(model_cfg, vocab.clone(), train_cfg.seed)?;
    let mut history = train(&mut model, &train_part.samples, &train_part.gold_opinions(), train_cfg)?;
    let f1 = evaluate(&model, &test_part.samples, &test_part.gold_opinions(), train_cfg.f1_scope)?;
    history.final_f1 = Some(f1);
    Ok((model, history, f1))
}

fn run_parallel<T, F>(count: usize, jobs: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    if jobs <= 1 {
        return (0..count).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| (0..count).into_par_iter().map(f).collect())
}

/// k-fold cross-validation over sentence-balanced document folds. Fold
/// results do not depend on `jobs`.
pub fn run_cv(
    corpus: &PreparedCorpus,
    k: usize,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    jobs: usize,
) -> Result<CvOutcome> {
    let counts: Vec<(&str, usize)> = corpus.docs.iter().map(|d| (d.doc_id.as_str(), d.sentences)).collect();
    let assignment = split_counts(&counts, k, train_cfg.seed)?;
    let vocab = corpus_vocabulary(corpus);
    let folds = run_parallel(k, jobs, |fold| {
        let test: Vec<String> = assignment.docs_in(fold).into_iter().map(String::from).collect();
        let train: Vec<String> = corpus
            .docs
            .iter()
            .map(|d| d.doc_id.clone())
            .filter(|d| assignment.fold_of_doc[d] != fold)
            .collect();
        let cfg = TrainConfig {
            seed: fold_seed(train_cfg.seed, fold),
            ..train_cfg.clone()
        };
        let (model, history, f1) = train_and_evaluate(corpus, &vocab, &train, &test, model_cfg, &cfg)?;
        Ok(FoldOutcome {
            fold,
            f1,
            history,
            test_docs: test,
            model,
        })
    })?;
    let mean_f1 = folds.iter().map(|f| f.f1).sum::<f64>() / folds.len() as f64;
    Ok(CvOutcome { folds, mean_f1 })
}

#[derive(Clone, Debug)]
pub struct TrainTestOutcome {
    pub f1: f64,
    pub history: RunHistory,
    pub model: AttitudeModel,
}

/// Train on the manifest's train documents, score the test documents.
pub fn run_train_test(
    corpus: &PreparedCorpus,
    manifest: &BTreeMap<String, Part>,
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
) -> Result<TrainTestOutcome> {
    let (train, test) = train_test_split(corpus.docs.iter().map(|d| d.doc_id.as_str()), manifest)?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::Data("manifest needs both train and test documents".into()));
    }
    let vocab = corpus_vocabulary(corpus);
    let (model, history, f1) = train_and_evaluate(corpus, &vocab, &train, &test, model_cfg, train_cfg)?;
    Ok(TrainTestOutcome { f1, history, model })
}
