//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the report is always printed; exits non-zero when any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use attitude::analysis::{default_grid, held_out_weights, summarize_weights};
use attitude::corpus::{Opinion, OpinionKey, Provenance};
use attitude::embedding::Vocabulary;
use attitude::encoders::{piecewise_pool, EncoderKind, FeatureMode};
use attitude::gradsuite::{random_sequence, run_suite, SuiteConfig};
use attitude::lexicons::{FrameEntry, FrameLexicon};
use attitude::model::{macro_f1, run_cv, should_stop, AttitudeModel, CvOutcome, F1Scope, ModelConfig, TrainConfig};
use attitude::pipeline::{prepare, PreparedCorpus};
use attitude::synthetic::{experiment_model_config, experiment_train_config, generate, SyntheticConfig};
use attitude::tensorgrad::{Tape, Tensor};
use attitude::termizer::{AnalysisGroup, LowercaseLemmatizer};
use attitude::Sentiment;

const GRAD_TOLERANCE: f64 = 1e-4;
const GRAD_TRIALS: usize = 20;
const GRAD_BUDGET_S: f64 = 120.0;
const PCNN_INSTANCES: usize = 1000;
const F1_SETS: usize = 200;
const F1_TOLERANCE: f64 = 1e-12;
const MATCH_MAX_LEN: usize = 8;
const NORM_PASSES: usize = 1000;
const ALPHA_SUM_TOLERANCE: f64 = 1e-9;
const RHO_SUM_TOLERANCE: f64 = 1e-12;
const ATT_MIN_F1: f64 = 0.90;
const BILSTM_MIN_F1: f64 = 0.75;
const MAX_EPOCHS: usize = 150;
const EXPERIMENT_BUDGET_S: f64 = 600.0;
const MIN_FRAMES_DISCREPANCY: f64 = 0.10;

struct Report {
    failed: usize,
}

impl Report {
    fn line(&mut self, name: &str, ok: bool, detail: String) {
        if !ok {
            self.failed += 1;
        }
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn gradient_suite(r: &mut Report) {
    let start = Instant::now();
    let reports = run_suite(&SuiteConfig {
        trials: GRAD_TRIALS,
        tolerance: GRAD_TOLERANCE,
        ..SuiteConfig::default()
    })
    .expect("gradient suite runs");
    let secs = start.elapsed().as_secs_f64();
    let worst = reports.iter().map(|x| x.max_rel_error).fold(0.0, f64::max);
    let failing: Vec<&str> = reports.iter().filter(|x| !x.passed()).map(|x| x.kind.name()).collect();
    r.line(
        "gradient-suite",
        failing.is_empty() && reports.len() == 8 && secs < GRAD_BUDGET_S,
        format!(
            "{} encoders x {GRAD_TRIALS} trials, max relative error {worst:.2e} (< {GRAD_TOLERANCE:e}), \
             {secs:.1}s (< {GRAD_BUDGET_S}s), failing {failing:?}",
            reports.len()
        ),
    );
}

fn brute_segments(m: &[Vec<f64>], subj: usize, obj: usize) -> Vec<f64> {
    let (p1, p2) = (subj.min(obj), subj.max(obj));
    let n = m.len();
    let f = m[0].len();
    let mut out = Vec::new();
    for (lo, hi) in [(0, p1 + 1), (p1 + 1, p2 + 1), (p2 + 1, n)] {
        for j in 0..f {
            let mut best: Option<f64> = None;
            for row in m.iter().take(hi.min(n)).skip(lo) {
                best = Some(best.map_or(row[j], |b: f64| b.max(row[j])));
            }
            out.push(best.unwrap_or(0.0));
        }
    }
    out
}

fn pcnn_oracle() -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0;
    for _ in 0..PCNN_INSTANCES {
        let n = rng.gen_range(2..=12);
        let f = rng.gen_range(1..=5);
        let m: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..f).map(|_| f64::from(rng.gen_range(-20i32..=20)) / 4.0).collect())
            .collect();
        let subj = rng.gen_range(0..n);
        let obj = loop {
            let o = rng.gen_range(0..n);
            if o != subj {
                break o;
            }
        };
        let mut tape = Tape::new();
        let c = tape.leaf(Tensor::from_rows(&m).unwrap());
        let pooled = piecewise_pool(&mut tape, c, subj, obj).unwrap();
        if tape.value(pooled).data() != brute_segments(&m, subj, obj).as_slice() {
            mismatches += 1;
        }
    }
    mismatches
}

fn brute_f1(pred: &BTreeMap<OpinionKey, Sentiment>, gold: &[Opinion], docs: &[String], per_doc: bool) -> f64 {
    let score = |keep: &dyn Fn(&str) -> bool| -> f64 {
        let mut keys: Vec<OpinionKey> = gold.iter().filter(|o| keep(&o.doc_id)).map(Opinion::key).collect();
        keys.extend(pred.keys().filter(|k| keep(&k.doc_id)).cloned());
        keys.sort();
        keys.dedup();
        let mut total = 0.0;
        for class in [Sentiment::Positive, Sentiment::Negative] {
            let (mut tp, mut fp, mut fn_) = (0.0, 0.0, 0.0);
            for k in &keys {
                let g = gold.iter().find(|o| &o.key() == k).map_or(Sentiment::Neutral, |o| o.label);
                let p = pred.get(k).copied().unwrap_or(Sentiment::Neutral);
                if g == class && p == class {
                    tp += 1.0;
                } else if p == class {
                    fp += 1.0;
                } else if g == class {
                    fn_ += 1.0;
                }
            }
            let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            total += if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
        }
        total / 2.0
    };
    if per_doc {
        let present: Vec<&String> = docs
            .iter()
            .filter(|d| gold.iter().any(|o| &o.doc_id == *d) || pred.keys().any(|k| &k.doc_id == *d))
            .collect();
        if present.is_empty() {
            return 0.0;
        }
        present.iter().map(|d| score(&|x: &str| x == d.as_str())).sum::<f64>() / present.len() as f64
    } else {
        score(&|_: &str| true)
    }
}

fn f1_oracle() -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..F1_SETS {
        let docs: Vec<String> = (0..rng.gen_range(1..=4)).map(|d| format!("d{d}")).collect();
        let mut gold = Vec::new();
        let mut pred = BTreeMap::new();
        for d in &docs {
            for s in 0..4 {
                for t in 0..4 {
                    if s == t {
                        continue;
                    }
                    let key = OpinionKey {
                        doc_id: d.clone(),
                        source: format!("g{s}"),
                        target: format!("g{t}"),
                    };
                    if rng.gen_bool(0.4) {
                        gold.push(Opinion {
                            doc_id: d.clone(),
                            source: key.source.clone(),
                            target: key.target.clone(),
                            label: *Sentiment::ALL.choose(&mut rng).unwrap(),
                            provenance: Provenance::Annotated,
                        });
                    }
                    if rng.gen_bool(0.4) {
                        pred.insert(key, *Sentiment::ALL.choose(&mut rng).unwrap());
                    }
                }
            }
        }
        for (scope, per_doc) in [(F1Scope::PerDocument, true), (F1Scope::Collection, false)] {
            let delta = (macro_f1(&pred, &gold, scope) - brute_f1(&pred, &gold, &docs, per_doc)).abs();
            worst = worst.max(delta);
        }
    }
    worst
}

/// Leftmost-longest selection from the full list of lexicon occurrences.
fn exhaustive_matches(seq: &[String], entries: &[FrameEntry]) -> Vec<(usize, usize, Sentiment)> {
    let mut all = Vec::new();
    for start in 0..seq.len() {
        for e in entries {
            let end = start + e.lemmas.len();
            if end <= seq.len() && seq[start..end] == e.lemmas[..] {
                all.push((start, end, e.polarity));
            }
        }
    }
    let mut chosen = Vec::new();
    let mut cursor = 0;
    while let Some(&m) = all
        .iter()
        .filter(|m| m.0 >= cursor)
        .min_by_key(|m| (m.0, std::cmp::Reverse(m.1)))
    {
        chosen.push(m);
        cursor = m.1;
    }
    chosen
}

fn frame_oracle() -> (usize, usize) {
    let word = |w: &str| w.to_string();
    let entries = vec![
        FrameEntry {
            lemmas: vec![word("a")],
            polarity: Sentiment::Positive,
        },
        FrameEntry {
            lemmas: vec![word("a"), word("b")],
            polarity: Sentiment::Negative,
        },
        FrameEntry {
            lemmas: vec![word("b"), word("c"), word("d")],
            polarity: Sentiment::Positive,
        },
        FrameEntry {
            lemmas: vec![word("c")],
            polarity: Sentiment::Neutral,
        },
        FrameEntry {
            lemmas: vec![word("d"), word("a")],
            polarity: Sentiment::Negative,
        },
    ];
    let lex = FrameLexicon::from_entries(entries.clone()).unwrap();
    let alphabet = ["a", "b", "c", "d"];
    let (mut checked, mut mismatches) = (0, 0);
    for len in 0..=MATCH_MAX_LEN {
        for code in 0..alphabet.len().pow(len as u32) {
            let mut c = code;
            let seq: Vec<String> = (0..len)
                .map(|_| {
                    let w = alphabet[c % alphabet.len()];
                    c /= alphabet.len();
                    w.to_string()
                })
                .collect();
            let got: Vec<(usize, usize, Sentiment)> =
                lex.match_frames(&seq).iter().map(|m| (m.start, m.end, m.polarity)).collect();
            if got != exhaustive_matches(&seq, &entries) {
                mismatches += 1;
            }
            checked += 1;
        }
    }
    (checked, mismatches)
}

fn oracle_equivalence(r: &mut Report) {
    let pcnn = pcnn_oracle();
    let f1 = f1_oracle();
    let (sequences, frames) = frame_oracle();
    r.line(
        "oracle-equivalence",
        pcnn == 0 && f1 < F1_TOLERANCE && frames == 0,
        format!(
            "piecewise pooling {pcnn}/{PCNN_INSTANCES} mismatches; macro-F1 max |delta| {f1:.1e} over {F1_SETS} sets \
             (< {F1_TOLERANCE:e}); frame matching {frames}/{sequences} mismatches (lengths <= {MATCH_MAX_LEN})"
        ),
    );
}

fn normalization(r: &mut Report) {
    let attentive: Vec<EncoderKind> = EncoderKind::ALL.into_iter().filter(|k| k.is_attentive()).collect();
    let vocab = Vocabulary::new(["alpha", "beta", "gamma", "delta", "eps"].map(String::from));
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut worst_alpha, mut worst_rho, mut negative, mut pad_mass) = (0.0f64, 0.0f64, 0usize, 0.0f64);
    for _ in 0..NORM_PASSES {
        let mut cfg = ModelConfig::default();
        let kind = *attentive.choose(&mut rng).unwrap();
        cfg.encoder.kind = kind;
        cfg.encoder.n = rng.gen_range(3..=12);
        cfg.encoder.hidden = rng.gen_range(2..=6);
        cfg.encoder.filters = rng.gen_range(2..=5);
        cfg.encoder.k = rng.gen_range(2..=4);
        cfg.encoder.features = if rng.gen_bool(0.5) {
            FeatureMode::AttEnds
        } else {
            FeatureMode::AttEf
        };
        cfg.embedding.word_dim = 4;
        cfg.embedding.use_position = kind.default_positions();
        let model = AttitudeModel::new(&cfg, vocab.clone(), rng.gen()).unwrap();
        let len = rng.gen_range(2..=cfg.encoder.n);
        let seq = random_sequence(&mut rng, len);

        let mut tape = Tape::new();
        let (probs, enc) = model.forward(&mut tape, &seq).unwrap();
        let raw = tape.value(enc.alpha.expect("attentive")).data().to_vec();
        worst_alpha = worst_alpha.max((raw.iter().sum::<f64>() - 1.0).abs());
        negative += raw.iter().filter(|&&a| a < 0.0).count();
        worst_rho = worst_rho.max((tape.value(probs).data().iter().sum::<f64>() - 1.0).abs());

        let (_, out) = model.predict_full(&seq).unwrap();
        let alpha = out.alpha.unwrap();
        assert_eq!(alpha.len(), cfg.encoder.n);
        pad_mass += alpha[seq.len()..].iter().map(|a| a.abs()).sum::<f64>();
    }
    r.line(
        "normalization",
        negative == 0 && worst_alpha < ALPHA_SUM_TOLERANCE && pad_mass == 0.0 && worst_rho < RHO_SUM_TOLERANCE,
        format!(
            "{NORM_PASSES} passes: {negative} negative weights, max |sum(alpha)-1| {worst_alpha:.1e} \
             (< {ALPHA_SUM_TOLERANCE:e}), pad mass {pad_mass}, max |sum(rho)-1| {worst_rho:.1e} (< {RHO_SUM_TOLERANCE:e})"
        ),
    );
}

fn synthetic_corpus() -> PreparedCorpus {
    let c = generate(&SyntheticConfig::default()).unwrap();
    prepare(&c.docs, &c.opinions, &c.lexicons, &LowercaseLemmatizer, 50).unwrap()
}

fn cv(corpus: &PreparedCorpus, kind: EncoderKind) -> CvOutcome {
    run_cv(corpus, 3, &experiment_model_config(kind), &experiment_train_config(0), 1).unwrap()
}

fn last_epoch(out: &CvOutcome) -> usize {
    out.folds
        .iter()
        .filter_map(|f| f.history.epochs().last().copied())
        .max()
        .unwrap_or(0)
}

fn synthetic_experiment(r: &mut Report, corpus: &PreparedCorpus) -> CvOutcome {
    let vocab = generate(&SyntheticConfig::default()).unwrap().vocabulary_size();
    let start = Instant::now();
    let att = cv(corpus, EncoderKind::AttBiLstm);
    let bilstm = cv(corpus, EncoderKind::BiLstm);
    let secs = start.elapsed().as_secs_f64();
    let epochs = last_epoch(&att).max(last_epoch(&bilstm));
    r.line(
        "synthetic-experiment",
        att.mean_f1 >= ATT_MIN_F1
            && bilstm.mean_f1 >= BILSTM_MIN_F1
            && att.mean_f1 >= bilstm.mean_f1
            && epochs <= MAX_EPOCHS
            && secs < EXPERIMENT_BUDGET_S,
        format!(
            "{} docs, vocabulary {vocab}; AttBLSTM mean F1 {:.4} (>= {ATT_MIN_F1}), BiLSTM {:.4} (>= {BILSTM_MIN_F1}), \
             last epoch {epochs} (<= {MAX_EPOCHS}), {secs:.1}s single-threaded (< {EXPERIMENT_BUDGET_S}s)",
            corpus.docs.len(),
            att.mean_f1,
            bilstm.mean_f1
        ),
    );
    att
}

fn attention_discrepancy(r: &mut Report, corpus: &PreparedCorpus, att: &CvOutcome) {
    let weights = held_out_weights(att, corpus).unwrap();
    let summaries = summarize_weights(&weights, &default_grid()).unwrap();
    let frames = summaries.iter().find(|s| s.group == AnalysisGroup::Frames).unwrap();
    let d = frames.discrepancy();
    r.line(
        "attention-discrepancy",
        d.is_some_and(|d| d >= MIN_FRAMES_DISCREPANCY),
        format!(
            "held-out FRAMES mean_S {:.4} ({} contexts) - mean_N {:.4} ({} contexts) = {:.4} (>= {MIN_FRAMES_DISCREPANCY})",
            frames.mean_s.unwrap_or(f64::NAN),
            frames.count_s,
            frames.mean_n.unwrap_or(f64::NAN),
            frames.count_n,
            d.unwrap_or(f64::NAN)
        ),
    );
}

fn protocol(r: &mut Report, att: &CvOutcome) {
    let cfg = TrainConfig::default();
    let scores = [0.0, 0.5, 0.85, 0.850_000_1, 0.9, 1.0];
    let mut wrong = 0;
    for epoch in 1..=MAX_EPOCHS {
        for &f1 in &scores {
            let stops = cfg.is_measurement(epoch) && should_stop(epoch, f1, &cfg);
            let expected = (epoch % 10 == 0 && f1 > 0.85) || epoch == 150;
            if stops != expected {
                wrong += 1;
            }
        }
    }
    let defaults = cfg.eval_period == 10 && cfg.max_epochs == 150 && cfg.stop_threshold == 0.85;

    let mut bad_histories = 0;
    for f in &att.folds {
        let epochs = f.history.epochs();
        let expected: Vec<usize> = (1..=epochs.len()).map(|i| 10 * i).collect();
        let last = f.history.measurements.last().unwrap();
        let stopped = last.train_f1 > 0.85 || last.epoch == 150;
        let early = f.history.measurements[..epochs.len() - 1].iter().all(|m| m.train_f1 <= 0.85);
        if epochs != expected || !stopped || !early {
            bad_histories += 1;
        }
    }
    r.line(
        "protocol-conformance",
        wrong == 0 && defaults && bad_histories == 0,
        format!(
            "stop truth table {wrong} mismatches over epochs 1..={MAX_EPOCHS} x {} scores; defaults period 10 / \
             cap 150 / threshold 0.85: {defaults}; {bad_histories} fold histories off the 10,20,... grid",
            scores.len()
        ),
    );
}

fn determinism(r: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_attitude");
    let run = |args: &[&str]| {
        let out = Command::new(bin).args(args).output().unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    };
    let corpus = dir.path().join("corpus");
    run(&["synth", "--out", corpus.to_str().unwrap()]);
    let conf = corpus.join("experiment.conf");
    let mut csvs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        run(&[
            "cv",
            "--config",
            conf.to_str().unwrap(),
            "--encoder",
            "bilstm",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        csvs.push(fs::read(out.join("cv_folds.csv")).unwrap());
    }
    r.line(
        "determinism",
        csvs[0] == csvs[1] && !csvs[0].is_empty(),
        format!(
            "two `attitude cv --seed 7` runs: per-fold CSVs {} ({} bytes)",
            if csvs[0] == csvs[1] { "byte-identical" } else { "differ" },
            csvs[0].len()
        ),
    );
}

fn main() -> ExitCode {
    let mut r = Report { failed: 0 };
    gradient_suite(&mut r);
    oracle_equivalence(&mut r);
    normalization(&mut r);
    let corpus = synthetic_corpus();
    let att = synthetic_experiment(&mut r, &corpus);
    attention_discrepancy(&mut r, &corpus, &att);
    protocol(&mut r, &att);
    determinism(&mut r);
    if r.failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} criteria failed", r.failed);
        ExitCode::FAILURE
    }
}
