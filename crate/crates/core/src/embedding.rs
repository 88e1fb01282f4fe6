//! Term vocabulary and the input embedding of a term sequence.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sentiment::Sentiment;
use crate::tensorgrad::{ParamId, ParamStore, Tape, Tensor, Var};
use crate::termizer::{Term, TermSequence, TokenKind};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const ENTITY_SUBJ: usize = 2;
pub const ENTITY_OBJ: usize = 3;
pub const ENTITY_OTHER: usize = 4;
pub const PUNCT: usize = 5;
pub const NUMBER: usize = 6;
pub const URL: usize = 7;
const RESERVED: usize = 8;

/// Word-table rows: reserved mask/token rows followed by sorted lemmas.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    lemmas: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(lemmas: impl IntoIterator<Item = String>) -> Self {
        let set: BTreeSet<String> = lemmas.into_iter().collect();
        let mut v = Vocabulary {
            lemmas: set.into_iter().collect(),
            index: HashMap::new(),
        };
        v.reindex();
        v
    }

    /// Collects the lemmas of word and frame terms.
    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a TermSequence>) -> Self {
        let mut lemmas = Vec::new();
        for s in seqs {
            for t in &s.terms {
                match t {
                    Term::Word { lemma } | Term::Frame { lemma, .. } => lemmas.push(lemma.clone()),
                    _ => {}
                }
            }
        }
        Self::new(lemmas)
    }

    pub(crate) fn reindex(&mut self) {
        self.index = self
            .lemmas
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i + RESERVED))
            .collect();
    }

    /// Table rows including reserved ones.
    pub fn size(&self) -> usize {
        self.lemmas.len() + RESERVED
    }

    pub fn lemmas(&self) -> &[String] {
        &self.lemmas
    }

    pub fn lemma_id(&self, lemma: &str) -> usize {
        self.index.get(lemma).copied().unwrap_or(UNK)
    }

    pub fn id_of(&self, term: &Term) -> usize {
        match term {
            Term::Word { lemma } | Term::Frame { lemma, .. } => self.lemma_id(lemma),
            Term::EntitySubj => ENTITY_SUBJ,
            Term::EntityObj => ENTITY_OBJ,
            Term::EntityOther => ENTITY_OTHER,
            Term::Token { token } => match token {
                TokenKind::Punctuation => PUNCT,
                TokenKind::Number => NUMBER,
                TokenKind::Url => URL,
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingConfig {
    pub word_dim: usize,
    pub polarity_dim: usize,
    pub use_position: bool,
    pub position_dim: usize,
    /// Signed distances are clamped to ±max_distance.
    pub max_distance: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            word_dim: 32,
            polarity_dim: 4,
            use_position: false,
            position_dim: 4,
            max_distance: 20,
        }
    }
}

impl EmbeddingConfig {
    pub fn row_width(&self) -> usize {
        self.word_dim + self.polarity_dim + if self.use_position { 2 * self.position_dim } else { 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.word_dim == 0 {
            return Err(Error::Config("word_dim must be positive".into()));
        }
        if self.use_position && self.position_dim == 0 {
            return Err(Error::Config("position_dim must be positive when positions are used".into()));
        }
        Ok(())
    }
}

/// Embedded context: an (n × row_width) matrix whose first `n_real` rows
/// hold the terms and the rest the pad row.
#[derive(Clone, Debug)]
pub struct EmbeddedContext {
    pub x: Var,
    pub n: usize,
    pub n_real: usize,
    pub subj_pos: usize,
    pub obj_pos: usize,
    pub frame_positions: Vec<usize>,
}

impl EmbeddedContext {
    pub fn pad_positions(&self) -> std::ops::Range<usize> {
        self.n_real..self.n
    }
}

#[derive(Clone, Debug)]
pub struct Embedder {
    pub cfg: EmbeddingConfig,
    pub word: ParamId,
    pub polarity: Option<ParamId>,
    pub position: Option<(ParamId, ParamId)>,
}

pub(crate) fn uniform<R: Rng>(rng: &mut R, shape: &[usize], limit: f64) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::new(shape.to_vec(), data).expect("finite uniform values")
}

impl Embedder {
    pub fn new<R: Rng>(store: &mut ParamStore, rng: &mut R, cfg: &EmbeddingConfig, vocab: &Vocabulary) -> Result<Self> {
        cfg.validate()?;
        let word = store.add("embed.word", uniform(rng, &[vocab.size(), cfg.word_dim], 0.5))?;
        let polarity = if cfg.polarity_dim > 0 {
            Some(store.add("embed.polarity", uniform(rng, &[3, cfg.polarity_dim], 0.5))?)
        } else {
            None
        };
        let position = if cfg.use_position {
            let rows = 2 * cfg.max_distance + 1;
            Some((
                store.add("embed.position_subj", uniform(rng, &[rows, cfg.position_dim], 0.5))?,
                store.add("embed.position_obj", uniform(rng, &[rows, cfg.position_dim], 0.5))?,
            ))
        } else {
            None
        };
        Ok(Embedder {
            cfg: cfg.clone(),
            word,
            polarity,
            position,
        })
    }

    pub fn row_width(&self) -> usize {
        self.cfg.row_width()
    }

    fn distance_id(&self, from: usize, to: usize) -> usize {
        let d = self.cfg.max_distance as isize;
        let diff = (from as isize - to as isize).clamp(-d, d);
        (diff + d) as usize
    }

    /// Embeds `seq`, right-padded to `n` rows.
    pub fn embed(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        vocab: &Vocabulary,
        seq: &TermSequence,
        n: usize,
    ) -> Result<EmbeddedContext> {
        let n_real = seq.len();
        if n_real == 0 || n_real > n {
            return Err(Error::shape(
                "embed",
                format!("sequence of {n_real} terms for window {n}"),
            ));
        }
        let mut word_ids: Vec<usize> = seq.terms.iter().map(|t| vocab.id_of(t)).collect();
        word_ids.resize(n, PAD);
        let mut parts = vec![tape.embedding(store, self.word, &word_ids)?];
        if let Some(table) = self.polarity {
            let mut ids: Vec<usize> = seq
                .terms
                .iter()
                .map(|t| match t {
                    Term::Frame { polarity, .. } => polarity.index(),
                    _ => Sentiment::Neutral.index(),
                })
                .collect();
            ids.resize(n, Sentiment::Neutral.index());
            parts.push(tape.embedding(store, table, &ids)?);
        }
        if let Some((subj_table, obj_table)) = self.position {
            let rows = n_real;
            let subj: Vec<usize> = (0..n)
                .map(|i| self.distance_id(i.min(rows - 1), seq.subj_pos))
                .collect();
            let obj: Vec<usize> = (0..n)
                .map(|i| self.distance_id(i.min(rows - 1), seq.obj_pos))
                .collect();
            parts.push(tape.embedding(store, subj_table, &subj)?);
            parts.push(tape.embedding(store, obj_table, &obj)?);
        }
        let x = if parts.len() == 1 {
            parts[0]
        } else {
            tape.concat(&parts, 1)?
        };
        Ok(EmbeddedContext {
            x,
            n,
            n_real,
            subj_pos: seq.subj_pos,
            obj_pos: seq.obj_pos,
            frame_positions: seq.frame_positions(),
        })
    }

    /// Overwrites word rows from a `token v1 … vm` text file. Returns the
    /// number of vocabulary rows that were found.
    pub fn load_pretrained(&self, store: &mut ParamStore, vocab: &Vocabulary, path: &Path) -> Result<usize> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let origin = path.display().to_string();
        let m = self.cfg.word_dim;
        let mut found = 0;
        for (i, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let values: Vec<f64> = fields
                .map(|f| f.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::parse(&origin, i + 1, format!("bad float: {e}")))?;
            if values.len() != m {
                return Err(Error::parse(
                    &origin,
                    i + 1,
                    format!("expected {m} values, got {}", values.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::parse(&origin, i + 1, "non-finite value"));
            }
            let id = vocab.lemma_id(&token.to_lowercase());
            if id == UNK {
                continue;
            }
            store.get_mut(self.word).value.data_mut()[id * m..(id + 1) * m].copy_from_slice(&values);
            found += 1;
        }
        Ok(found)
    }
}
