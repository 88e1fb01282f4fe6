//! Planted-signal corpus generator.
//!
//! Every annotated opinion is expressed by a frame term between its two
//! participants; the label is the frame's polarity, flipped when the frame
//! is preceded by the negation particle. Remaining sentences mention pairs
//! that carry no annotated opinion and contain no frames.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::corpus::{Document, EntityMention, Opinion, Provenance, Sentence, SynonymGroup};
use crate::error::{Error, Result};
use crate::encoders::EncoderKind;
use crate::lexicons::{FrameEntry, FrameLexicon, LemmaSet, Lexicons, DEFAULT_NEGATION};
use crate::model::{ModelConfig, TrainConfig};
use crate::sentiment::Sentiment;

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub docs: usize,
    pub seed: u64,
    pub fillers: usize,
    /// Frames per polarity.
    pub frames: usize,
    pub sentiment_words: usize,
    pub prepositions: usize,
    pub entities_per_doc: usize,
    pub negation_rate: f64,
    /// Inclusive range of sentences expressing each annotated opinion.
    pub mentions_per_opinion: (usize, usize),
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            docs: 60,
            seed: 0,
            fillers: 160,
            frames: 6,
            sentiment_words: 12,
            prepositions: 8,
            entities_per_doc: 6,
            negation_rate: 0.25,
            mentions_per_opinion: (2, 3),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub docs: Vec<Document>,
    pub opinions: Vec<Opinion>,
    pub lexicons: Lexicons,
    pub fillers: Vec<String>,
}

impl SyntheticCorpus {
    /// Distinct lowercase word types outside entity names.
    pub fn vocabulary_size(&self) -> usize {
        let mut words = BTreeSet::new();
        for d in &self.docs {
            for (si, s) in d.sentences.iter().enumerate() {
                let masked: BTreeSet<usize> = d
                    .mentions_in(si)
                    .flat_map(|(_, m)| m.start..m.end)
                    .collect();
                for (ti, t) in s.tokens.iter().enumerate() {
                    if !masked.contains(&ti) {
                        words.insert(t.to_lowercase());
                    }
                }
            }
        }
        words.len()
    }
}

const CONSONANTS: &[char] = &['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

/// Distinct pseudo-words of `syllables` syllables, none in `taken`.
fn words(rng: &mut ChaCha8Rng, count: usize, syllables: usize, taken: &mut BTreeSet<String>) -> Vec<String> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let w: String = (0..syllables)
            .flat_map(|_| [*CONSONANTS.choose(rng).unwrap(), *VOWELS.choose(rng).unwrap()])
            .collect();
        if taken.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    c.next()
        .map(|f| f.to_uppercase().chain(c).collect())
        .unwrap_or_default()
}

struct Lexemes {
    fillers: Vec<String>,
    positive: Vec<String>,
    negative: Vec<String>,
    sentiment: Vec<String>,
    prepositions: Vec<String>,
    names: Vec<String>,
}

/// Appends 0..=max filler tokens, occasionally a sentiment word or a preposition.
fn filler_run(rng: &mut ChaCha8Rng, lx: &Lexemes, out: &mut Vec<String>, max: usize) {
    for _ in 0..rng.gen_range(0..=max) {
        let r: f64 = rng.gen();
        let pool = if r < 0.15 {
            &lx.prepositions
        } else if r < 0.25 {
            &lx.sentiment
        } else {
            &lx.fillers
        };
        out.push(pool.choose(rng).unwrap().clone());
    }
}

struct DocBuilder {
    sentences: Vec<Sentence>,
    mentions: Vec<EntityMention>,
}

impl DocBuilder {
    /// Adds a sentence whose tokens may reference entity slots.
    fn push(&mut self, parts: Vec<Part>, names: &[String]) {
        let idx = self.sentences.len();
        let mut tokens = Vec::new();
        for p in parts {
            match p {
                Part::Word(w) => tokens.push(w),
                Part::Entity(e) => {
                    self.mentions.push(EntityMention {
                        sentence_idx: idx,
                        start: tokens.len(),
                        end: tokens.len() + 1,
                        group_id: format!("g{e}"),
                    });
                    tokens.push(names[e].clone());
                }
            }
        }
        self.sentences.push(Sentence::new(tokens));
    }
}

enum Part {
    Word(String),
    Entity(usize),
}

fn words_part(rng: &mut ChaCha8Rng, lx: &Lexemes, max: usize) -> Vec<Part> {
    let mut w = Vec::new();
    filler_run(rng, lx, &mut w, max);
    w.into_iter().map(Part::Word).collect()
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    let (lo, hi) = cfg.mentions_per_opinion;
    if cfg.docs == 0 || cfg.entities_per_doc < 4 || cfg.frames == 0 || cfg.fillers == 0 || lo == 0 || lo > hi {
        return Err(Error::Config(
            "synthetic corpus needs documents, at least 4 entities per document, frames, fillers and opinion mentions".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut taken = BTreeSet::new();
    let prepositions = words(&mut rng, cfg.prepositions, 1, &mut taken);
    let fillers = words(&mut rng, cfg.fillers, 2, &mut taken);
    let sentiment = words(&mut rng, cfg.sentiment_words, 2, &mut taken);
    let positive = words(&mut rng, cfg.frames, 3, &mut taken);
    let negative = words(&mut rng, cfg.frames, 3, &mut taken);
    let names: Vec<String> = words(&mut rng, 3 * cfg.entities_per_doc, 3, &mut taken)
        .iter()
        .map(|w| capitalize(w))
        .collect();
    let lx = Lexemes {
        fillers,
        positive,
        negative,
        sentiment,
        prepositions,
        names,
    };

    let mut docs = Vec::with_capacity(cfg.docs);
    let mut opinions = Vec::new();
    for d in 0..cfg.docs {
        let doc_id = format!("doc{d:03}");
        let mut pool: Vec<usize> = (0..lx.names.len()).collect();
        pool.shuffle(&mut rng);
        let ents: Vec<usize> = pool[..cfg.entities_per_doc].to_vec();
        let names: Vec<String> = (0..lx.names.len()).map(|i| lx.names[i].clone()).collect();

        // two or three annotated pairs over disjoint entities, at least one of each label
        let n_pairs = (cfg.entities_per_doc / 2).clamp(2, 3);
        let mut labels = vec![Sentiment::Positive, Sentiment::Negative];
        while labels.len() < n_pairs {
            labels.push(if rng.gen_bool(0.5) { Sentiment::Positive } else { Sentiment::Negative });
        }
        labels.shuffle(&mut rng);
        let annotated: Vec<(usize, usize, Sentiment)> = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| (ents[2 * i], ents[2 * i + 1], l))
            .collect();
        let linked: BTreeSet<(usize, usize)> = annotated
            .iter()
            .flat_map(|&(a, b, _)| [(a, b), (b, a)])
            .collect();

        let mut plan: Vec<Option<usize>> = Vec::new();
        for i in 0..annotated.len() {
            for _ in 0..rng.gen_range(cfg.mentions_per_opinion.0..=cfg.mentions_per_opinion.1) {
                plan.push(Some(i));
            }
        }
        for _ in 0..rng.gen_range(3..=5) {
            plan.push(None);
        }
        plan.shuffle(&mut rng);

        let mut b = DocBuilder {
            sentences: Vec::new(),
            mentions: Vec::new(),
        };
        for step in plan {
            let mut parts = words_part(&mut rng, &lx, 3);
            match step {
                Some(i) => {
                    let (src, tgt, label) = annotated[i];
                    let negated = rng.gen_bool(cfg.negation_rate);
                    let polarity = if negated { label.inverted() } else { label };
                    let frames = if polarity == Sentiment::Positive { &lx.positive } else { &lx.negative };
                    parts.push(Part::Entity(src));
                    parts.extend(words_part(&mut rng, &lx, 2));
                    if negated {
                        parts.push(Part::Word(DEFAULT_NEGATION.to_string()));
                    }
                    parts.push(Part::Word(frames.choose(&mut rng).unwrap().clone()));
                    parts.extend(words_part(&mut rng, &lx, 2));
                    parts.push(Part::Entity(tgt));
                }
                None => {
                    let mut chosen: Vec<usize> = Vec::new();
                    let want = rng.gen_range(2..=3);
                    let mut order = ents.clone();
                    order.shuffle(&mut rng);
                    for e in order {
                        if chosen.len() < want && chosen.iter().all(|&c| !linked.contains(&(c, e))) {
                            chosen.push(e);
                        }
                    }
                    for (k, e) in chosen.into_iter().enumerate() {
                        if k > 0 {
                            parts.extend(words_part(&mut rng, &lx, 3));
                            if parts.last().is_none_or(|p| matches!(p, Part::Entity(_))) {
                                parts.push(Part::Word(lx.fillers.choose(&mut rng).unwrap().clone()));
                            }
                        }
                        parts.push(Part::Entity(e));
                    }
                }
            }
            parts.extend(words_part(&mut rng, &lx, 3));
            parts.push(Part::Word(".".into()));
            b.push(parts, &names);
        }

        let used: BTreeSet<&str> = b.mentions.iter().map(|m| m.group_id.as_str()).collect();
        let groups = ents
            .iter()
            .filter(|&&e| used.contains(format!("g{e}").as_str()))
            .map(|&e| SynonymGroup {
                group_id: format!("g{e}"),
                variants: vec![names[e].clone()],
            })
            .collect();
        // attitudes are mutual, so every frame-bearing context is annotated
        for &(a, t, label) in &annotated {
            for (src, tgt) in [(a, t), (t, a)] {
                opinions.push(Opinion {
                    doc_id: doc_id.clone(),
                    source: format!("g{src}"),
                    target: format!("g{tgt}"),
                    label,
                    provenance: Provenance::Annotated,
                });
            }
        }
        docs.push(Document {
            doc_id,
            sentences: b.sentences,
            mentions: b.mentions,
            groups,
        });
    }

    let frames = FrameLexicon::from_entries(
        lx.positive
            .iter()
            .map(|w| (w, Sentiment::Positive))
            .chain(lx.negative.iter().map(|w| (w, Sentiment::Negative)))
            .map(|(w, p)| FrameEntry {
                lemmas: vec![w.clone()],
                polarity: p,
            }),
    )?;
    let lexicons = Lexicons {
        frames,
        sentiment: LemmaSet::from_lemmas(&lx.sentiment),
        prepositions: LemmaSet::from_lemmas(&lx.prepositions),
        negation: DEFAULT_NEGATION.to_string(),
    };
    Ok(SyntheticCorpus {
        docs,
        opinions,
        lexicons,
        fillers: lx.fillers,
    })
}

/// Model settings sized for the synthetic corpus.
pub fn experiment_model_config(kind: EncoderKind) -> ModelConfig {
    let mut cfg = ModelConfig::default();
    cfg.encoder.kind = kind;
    cfg.encoder.hidden = 8;
    cfg.embedding.word_dim = 16;
    cfg.embedding.polarity_dim = 8;
    cfg.embedding.use_position = kind.default_positions();
    cfg
}

pub fn experiment_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        lr: 5e-3,
        seed,
        ..TrainConfig::default()
    }
}

/// Documents in the line-delimited ingestion format.
pub fn documents_jsonl(docs: &[Document]) -> String {
    let mut out = String::new();
    for d in docs {
        let record = json!({
            "doc_id": d.doc_id,
            "sentences": d.sentences.iter().map(|s| &s.tokens).collect::<Vec<_>>(),
            "mentions": d.mentions.iter().map(|m| json!([m.sentence_idx, m.start, m.end, m.group_id])).collect::<Vec<_>>(),
            "groups": d.groups.iter().map(|g| {
                let mut v = vec![g.group_id.clone()];
                v.extend(g.variants.iter().cloned());
                v
            }).collect::<Vec<_>>(),
        });
        writeln!(out, "{record}").expect("writing to a String");
    }
    out
}

pub fn opinions_tsv(opinions: &[Opinion]) -> String {
    let mut out = String::new();
    for o in opinions {
        writeln!(out, "{}\t{}\t{}\t{}", o.doc_id, o.source, o.target, o.label.short()).expect("writing to a String");
    }
    out
}

/// Writes `documents.jsonl`, `opinions.tsv`, `frames.tsv`, `sentiment.txt`,
/// `prepositions.txt` and `manifest.tsv` (first two thirds train).
pub fn write_corpus(corpus: &SyntheticCorpus, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write("documents.jsonl", documents_jsonl(&corpus.docs))?;
    write("opinions.tsv", opinions_tsv(&corpus.opinions))?;
    let mut frames = String::new();
    for e in corpus.lexicons.frames.entries() {
        writeln!(frames, "{}\t{}", e.lemmas.join(" "), e.polarity.short()).expect("writing to a String");
    }
    write("frames.tsv", frames)?;
    let lines = |set: &LemmaSet| set.sorted().iter().map(|w| format!("{w}\n")).collect::<String>();
    write("sentiment.txt", lines(&corpus.lexicons.sentiment))?;
    write("prepositions.txt", lines(&corpus.lexicons.prepositions))?;
    let cut = corpus.docs.len() * 2 / 3;
    let manifest: String = corpus
        .docs
        .iter()
        .enumerate()
        .map(|(i, d)| format!("{}\t{}\n", d.doc_id, if i < cut { "train" } else { "test" }))
        .collect();
    write("manifest.tsv", manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{load_corpus, parse_documents, parse_opinions};

    #[test]
    fn documents_carry_both_labels() {
        let c = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(c.docs.len(), 60);
        for d in &c.docs {
            let labels: BTreeSet<Sentiment> = c.opinions.iter().filter(|o| o.doc_id == d.doc_id).map(|o| o.label).collect();
            assert!(labels.contains(&Sentiment::Positive) && labels.contains(&Sentiment::Negative));
        }
        let v = c.vocabulary_size();
        assert!((150..=230).contains(&v), "vocabulary {v}");
    }

    #[test]
    fn round_trips_through_ingestion() {
        let c = generate(&SyntheticConfig {
            docs: 6,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let docs = parse_documents(&documents_jsonl(&c.docs), "d").unwrap();
        assert_eq!(docs, c.docs);
        let ops = parse_opinions(&opinions_tsv(&c.opinions), "o", &docs).unwrap();
        assert_eq!(ops, c.opinions);

        let dir = tempfile::tempdir().unwrap();
        write_corpus(&c, dir.path()).unwrap();
        let (d2, o2) = load_corpus(dir.path()).unwrap();
        assert_eq!((d2, o2), (docs, ops));
        let lex = Lexicons::load(
            &dir.path().join("frames.tsv"),
            &dir.path().join("sentiment.txt"),
            &dir.path().join("prepositions.txt"),
        )
        .unwrap();
        assert_eq!(lex.frames.entries(), c.lexicons.frames.entries());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&SyntheticConfig::default()).unwrap();
        let b = generate(&SyntheticConfig::default()).unwrap();
        assert_eq!(documents_jsonl(&a.docs), documents_jsonl(&b.docs));
        let c = generate(&SyntheticConfig {
            seed: 1,
            ..SyntheticConfig::default()
        })
        .unwrap();
        assert_ne!(documents_jsonl(&a.docs), documents_jsonl(&c.docs));
    }
}
