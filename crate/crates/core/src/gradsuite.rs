//! Central-difference gradient checks of every encoder composed with the
//! classifier head and cross-entropy, on small random instances.

use std::fmt;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::embedding::Vocabulary;
use crate::encoders::{EncoderKind, FeatureMode};
use crate::error::Result;
use crate::model::{AttitudeModel, ModelConfig};
use crate::sentiment::Sentiment;
use crate::tensorgrad::gradient_check;
use crate::termizer::{Term, TermSequence};

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub trials: usize,
    pub seed: u64,
    pub eps: f64,
    pub tolerance: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            trials: 20,
            seed: 0,
            eps: 1e-5,
            tolerance: 1e-4,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderGradReport {
    pub kind: EncoderKind,
    pub trials: usize,
    pub max_rel_error: f64,
    /// Parameter and flat index of the worst coordinate over all trials.
    pub worst: Option<(String, usize)>,
    /// Tape and central-difference gradients at the worst coordinate.
    pub analytic: f64,
    pub numeric: f64,
    pub tolerance: f64,
}

impl EncoderGradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

impl fmt::Display for EncoderGradReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<16} trials={} max_rel_error={:.3e} {}",
            self.kind.name(),
            self.trials,
            self.max_rel_error,
            if self.passed() { "ok" } else { "FAIL" }
        )?;
        if let Some((name, i)) = &self.worst {
            write!(f, " worst={name}[{i}] analytic={:.6e} numeric={:.6e}", self.analytic, self.numeric)?;
        }
        Ok(())
    }
}

const WORDS: [&str; 5] = ["alpha", "beta", "gamma", "delta", "eps"];

/// Random context of `len` terms with both participants, some frames and
/// possibly another entity.
pub fn random_sequence<R: Rng>(rng: &mut R, len: usize) -> TermSequence {
    assert!(len >= 2, "a context needs two participants");
    let mut slots: Vec<usize> = (0..len).collect();
    slots.shuffle(rng);
    let (subj_pos, obj_pos) = (slots[0], slots[1]);
    let terms: Vec<Term> = (0..len)
        .map(|i| {
            if i == subj_pos {
                Term::EntitySubj
            } else if i == obj_pos {
                Term::EntityObj
            } else {
                let lemma = WORDS.choose(rng).unwrap().to_string();
                match rng.gen_range(0..10) {
                    0..=2 => Term::Frame {
                        lemma,
                        polarity: *Sentiment::ALL.choose(rng).unwrap(),
                    },
                    3 => Term::EntityOther,
                    _ => Term::Word { lemma },
                }
            }
        })
        .collect();
    TermSequence {
        surfaces: terms.iter().map(Term::label).collect(),
        terms,
        subj_pos,
        obj_pos,
    }
}

fn random_config<R: Rng>(rng: &mut R, kind: EncoderKind) -> ModelConfig {
    let mut cfg = ModelConfig::default();
    let enc = &mut cfg.encoder;
    enc.kind = kind;
    enc.n = rng.gen_range(4..=10);
    enc.hidden = rng.gen_range(2..=8);
    enc.filters = rng.gen_range(2..=6);
    enc.window = 3;
    enc.k = rng.gen_range(2..=4);
    enc.features = if rng.gen_bool(0.5) {
        FeatureMode::AttEnds
    } else {
        FeatureMode::AttEf
    };
    let emb = &mut cfg.embedding;
    emb.word_dim = 3;
    emb.polarity_dim = 2;
    emb.use_position = kind.default_positions();
    emb.position_dim = 2;
    emb.max_distance = 5;
    cfg
}

pub fn check_encoder(kind: EncoderKind, cfg: &SuiteConfig) -> Result<EncoderGradReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ (kind as u64).wrapping_mul(0x9E37_79B9));
    let vocab = Vocabulary::new(WORDS.iter().map(|w| w.to_string()));
    let mut report = EncoderGradReport {
        kind,
        trials: cfg.trials,
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        tolerance: cfg.tolerance,
    };
    for _ in 0..cfg.trials {
        let mcfg = random_config(&mut rng, kind);
        let len = rng.gen_range(2..=mcfg.encoder.n);
        let seq = random_sequence(&mut rng, len);
        let gold = *Sentiment::ALL.choose(&mut rng).unwrap();
        let mut model = AttitudeModel::new(&mcfg, vocab.clone(), rng.gen())?;
        let mut store = std::mem::take(&mut model.store);
        let r = gradient_check(&mut store, cfg.eps, |tape, store| {
            let ctx = model.embedder.embed(tape, store, &model.vocab, &seq, model.n())?;
            let enc = model.encoder.encode(tape, store, &ctx)?;
            let probs = model.head.forward(tape, store, enc.s)?;
            tape.cross_entropy(probs, gold.index())
        })?;
        if r.worst.is_some() && (report.worst.is_none() || r.max_rel_error > report.max_rel_error) {
            report.max_rel_error = r.max_rel_error;
            report.worst = r.worst;
            report.analytic = r.analytic;
            report.numeric = r.numeric;
        }
    }
    Ok(report)
}

/// One report per encoder kind, in [`EncoderKind::ALL`] order.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<EncoderGradReport>> {
    EncoderKind::ALL.iter().map(|&k| check_encoder(k, cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_sequences_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for len in 2..12 {
            random_sequence(&mut rng, len).validate().unwrap();
        }
    }

    #[test]
    fn few_trials_pass() {
        let cfg = SuiteConfig {
            trials: 2,
            ..SuiteConfig::default()
        };
        for r in run_suite(&cfg).unwrap() {
            assert!(r.passed(), "{r}");
        }
    }
}
