//! Document ingestion, neutral-pair augmentation, context extraction and
//! document splits.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sentiment::Sentiment;

pub type GroupId = String;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    /// Character offsets of each token, assuming single-space separation.
    pub offsets: Vec<(usize, usize)>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Self {
        let mut offsets = Vec::with_capacity(tokens.len());
        let mut pos = 0;
        for t in &tokens {
            let len = t.chars().count();
            offsets.push((pos, pos + len));
            pos += len + 1;
        }
        Sentence { tokens, offsets }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMention {
    pub sentence_idx: usize,
    /// Half-open token range.
    pub start: usize,
    pub end: usize,
    pub group_id: GroupId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymGroup {
    pub group_id: GroupId,
    pub variants: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub sentences: Vec<Sentence>,
    pub mentions: Vec<EntityMention>,
    pub groups: Vec<SynonymGroup>,
}

impl Document {
    pub fn mentions_in(&self, sentence_idx: usize) -> impl Iterator<Item = (usize, &EntityMention)> {
        self.mentions
            .iter()
            .enumerate()
            .filter(move |(_, m)| m.sentence_idx == sentence_idx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Annotated,
    Augmented,
}

/// A directed sentiment relation between two synonym groups of one document.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Opinion {
    pub doc_id: String,
    pub source: GroupId,
    pub target: GroupId,
    pub label: Sentiment,
    pub provenance: Provenance,
}

/// Identifies a document-level opinion.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OpinionKey {
    pub doc_id: String,
    pub source: GroupId,
    pub target: GroupId,
}

impl Opinion {
    pub fn key(&self) -> OpinionKey {
        OpinionKey {
            doc_id: self.doc_id.clone(),
            source: self.source.clone(),
            target: self.target.clone(),
        }
    }
}

/// One opinion anchored in one sentence, before termization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextCandidate {
    pub doc_id: String,
    pub sentence_idx: usize,
    pub source: GroupId,
    pub target: GroupId,
    /// Indices into `Document::mentions`.
    pub subj_mention: usize,
    pub obj_mention: usize,
    pub label: Sentiment,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldAssignment {
    pub fold_of_doc: BTreeMap<String, usize>,
    pub sentence_counts: Vec<usize>,
}

impl FoldAssignment {
    pub fn docs_in(&self, fold: usize) -> Vec<&str> {
        self.fold_of_doc
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(d, _)| d.as_str())
            .collect()
    }

    pub fn folds(&self) -> usize {
        self.sentence_counts.len()
    }
}

#[derive(Deserialize)]
struct RawDocument {
    doc_id: String,
    sentences: Vec<Vec<String>>,
    #[serde(default)]
    mentions: Vec<(usize, usize, usize, String)>,
    #[serde(default)]
    groups: Vec<Vec<String>>,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses the line-delimited document format. Blank lines are skipped.
pub fn parse_documents(text: &str, origin: &str) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(line)
            .map_err(|e| Error::parse(origin, lineno, format!("malformed record: {e}")))?;
        let doc = validate_document(raw).map_err(|m| Error::parse(origin, lineno, m))?;
        if !seen.insert(doc.doc_id.clone()) {
            return Err(Error::parse(origin, lineno, format!("duplicate doc_id {}", doc.doc_id)));
        }
        docs.push(doc);
    }
    Ok(docs)
}

fn validate_document(raw: RawDocument) -> std::result::Result<Document, String> {
    let mut groups = Vec::with_capacity(raw.groups.len());
    let mut group_ids = HashSet::new();
    for (gi, g) in raw.groups.into_iter().enumerate() {
        let mut it = g.into_iter();
        let id = it
            .next()
            .ok_or_else(|| format!("field groups[{gi}]: missing group id"))?;
        let variants: Vec<String> = it.collect();
        if variants.is_empty() {
            return Err(format!("field groups[{gi}]: group {id} has no variants"));
        }
        let mut lower = HashSet::new();
        for v in &variants {
            if !lower.insert(v.to_lowercase()) {
                return Err(format!("field groups[{gi}]: duplicate variant {v:?}"));
            }
        }
        if !group_ids.insert(id.clone()) {
            return Err(format!("field groups[{gi}]: duplicate group id {id}"));
        }
        groups.push(SynonymGroup {
            group_id: id,
            variants,
        });
    }

    let sentences: Vec<Sentence> = raw.sentences.into_iter().map(Sentence::new).collect();
    let mut mentions = Vec::with_capacity(raw.mentions.len());
    for (mi, (s, start, end, gid)) in raw.mentions.into_iter().enumerate() {
        let sentence = sentences
            .get(s)
            .ok_or_else(|| format!("field mentions[{mi}]: sentence {s} out of range"))?;
        if start >= end {
            return Err(format!("field mentions[{mi}]: empty span {start}..{end}"));
        }
        if end > sentence.len() {
            return Err(format!(
                "field mentions[{mi}]: span end {end} exceeds sentence length {}",
                sentence.len()
            ));
        }
        if !group_ids.contains(&gid) {
            return Err(format!("field mentions[{mi}]: dangling group id {gid}"));
        }
        mentions.push(EntityMention {
            sentence_idx: s,
            start,
            end,
            group_id: gid,
        });
    }

    let mut by_sentence: BTreeMap<usize, Vec<&EntityMention>> = BTreeMap::new();
    for m in &mentions {
        by_sentence.entry(m.sentence_idx).or_default().push(m);
    }
    for (s, mut ms) in by_sentence {
        ms.sort_by_key(|m| (m.start, m.end));
        for w in ms.windows(2) {
            if w[1].start < w[0].end {
                return Err(format!(
                    "field mentions: overlapping spans {}..{} and {}..{} in sentence {s}",
                    w[0].start, w[0].end, w[1].start, w[1].end
                ));
            }
        }
    }

    Ok(Document {
        doc_id: raw.doc_id,
        sentences,
        mentions,
        groups,
    })
}

/// Parses `doc_id<TAB>source<TAB>target<TAB>label` lines against `docs`.
pub fn parse_opinions(text: &str, origin: &str, docs: &[Document]) -> Result<Vec<Opinion>> {
    let groups: HashMap<&str, HashSet<&str>> = docs
        .iter()
        .map(|d| {
            (
                d.doc_id.as_str(),
                d.groups.iter().map(|g| g.group_id.as_str()).collect(),
            )
        })
        .collect();
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(
                origin,
                lineno,
                format!("expected 4 tab-separated fields, got {}", fields.len()),
            ));
        }
        let (doc_id, source, target) = (fields[0].trim(), fields[1].trim(), fields[2].trim());
        let label: Sentiment = fields[3]
            .parse()
            .map_err(|e: String| Error::parse(origin, lineno, format!("field label: {e}")))?;
        if label == Sentiment::Neutral {
            return Err(Error::parse(origin, lineno, "annotated opinions cannot be neutral"));
        }
        let known = groups
            .get(doc_id)
            .ok_or_else(|| Error::parse(origin, lineno, format!("unknown doc_id {doc_id}")))?;
        for (field, g) in [("source", source), ("target", target)] {
            if !known.contains(g) {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("field {field}: dangling group id {g}"),
                ));
            }
        }
        if source == target {
            return Err(Error::parse(origin, lineno, "source and target must differ"));
        }
        if !seen.insert((doc_id.to_string(), source.to_string(), target.to_string())) {
            return Err(Error::parse(origin, lineno, "duplicate opinion"));
        }
        out.push(Opinion {
            doc_id: doc_id.to_string(),
            source: source.to_string(),
            target: target.to_string(),
            label,
            provenance: Provenance::Annotated,
        });
    }
    Ok(out)
}

pub fn load_documents(path: &Path) -> Result<Vec<Document>> {
    parse_documents(&read(path)?, &path.display().to_string())
}

pub fn load_opinions(path: &Path, docs: &[Document]) -> Result<Vec<Opinion>> {
    parse_opinions(&read(path)?, &path.display().to_string(), docs)
}

/// Loads a corpus. A directory must hold `documents.jsonl` and may hold
/// `opinions.tsv`; a file is read as documents with no opinions.
pub fn load_corpus(path: &Path) -> Result<(Vec<Document>, Vec<Opinion>)> {
    if path.is_dir() {
        let docs = load_documents(&path.join("documents.jsonl"))?;
        let op_path = path.join("opinions.tsv");
        let opinions = if op_path.exists() {
            load_opinions(&op_path, &docs)?
        } else {
            Vec::new()
        };
        Ok((docs, opinions))
    } else {
        Ok((load_documents(path)?, Vec::new()))
    }
}

/// Adds a neutral opinion for every ordered pair of distinct groups that
/// co-occur in a sentence of `doc` and are not already in `annotated`.
pub fn augment_neutral(doc: &Document, annotated: &[Opinion]) -> Vec<Opinion> {
    let present: HashSet<(&str, &str)> = annotated
        .iter()
        .filter(|o| o.doc_id == doc.doc_id)
        .map(|o| (o.source.as_str(), o.target.as_str()))
        .collect();
    let mut pairs: BTreeSet<(&str, &str)> = BTreeSet::new();
    for s in 0..doc.sentences.len() {
        let groups: BTreeSet<&str> = doc.mentions_in(s).map(|(_, m)| m.group_id.as_str()).collect();
        for &a in &groups {
            for &b in &groups {
                if a != b && !present.contains(&(a, b)) {
                    pairs.insert((a, b));
                }
            }
        }
    }
    let mut out = annotated.to_vec();
    out.extend(pairs.into_iter().map(|(a, b)| Opinion {
        doc_id: doc.doc_id.clone(),
        source: a.to_string(),
        target: b.to_string(),
        label: Sentiment::Neutral,
        provenance: Provenance::Augmented,
    }));
    out
}

/// One candidate per (opinion, sentence) where both sides are mentioned.
/// The closest mention pair anchors the context; ties go to the leftmost
/// subject, then the leftmost object.
pub fn extract_contexts(doc: &Document, opinions: &[Opinion]) -> Vec<ContextCandidate> {
    let mut out = Vec::new();
    for op in opinions.iter().filter(|o| o.doc_id == doc.doc_id) {
        for s in 0..doc.sentences.len() {
            let mut best: Option<(usize, usize, usize, usize, usize)> = None;
            for (si, sm) in doc.mentions_in(s).filter(|(_, m)| m.group_id == op.source) {
                for (oi, om) in doc.mentions_in(s).filter(|(_, m)| m.group_id == op.target) {
                    let key = (sm.start.abs_diff(om.start), sm.start, om.start, si, oi);
                    if best.is_none_or(|b| key < b) {
                        best = Some(key);
                    }
                }
            }
            if let Some((_, _, _, si, oi)) = best {
                out.push(ContextCandidate {
                    doc_id: doc.doc_id.clone(),
                    sentence_idx: s,
                    source: op.source.clone(),
                    target: op.target.clone(),
                    subj_mention: si,
                    obj_mention: oi,
                    label: op.label,
                });
            }
        }
    }
    out
}

/// Balances documents over `k` folds by sentence count: documents are
/// shuffled by `seed`, stably sorted by count (descending) and each goes to
/// the currently lightest fold, lowest index on ties.
pub fn split_folds(docs: &[Document], k: usize, seed: u64) -> Result<FoldAssignment> {
    let counts: Vec<(&str, usize)> = docs.iter().map(|d| (d.doc_id.as_str(), d.sentences.len())).collect();
    split_counts(&counts, k, seed)
}

/// [`split_folds`] over bare (doc_id, sentence count) pairs.
pub fn split_counts(docs: &[(&str, usize)], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 || docs.len() < k {
        return Err(Error::Data(format!(
            "cannot split {} documents into {k} folds",
            docs.len()
        )));
    }
    let mut order: Vec<(&str, usize)> = docs.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.sort_by(|a, b| b.1.cmp(&a.1));
    let mut totals = vec![0usize; k];
    let mut fold_of_doc = BTreeMap::new();
    for (doc, count) in order {
        let (fold, _) = totals
            .iter()
            .enumerate()
            .min_by_key(|(i, t)| (**t, *i))
            .expect("k > 0");
        totals[fold] += count;
        fold_of_doc.insert(doc.to_string(), fold);
    }
    Ok(FoldAssignment {
        fold_of_doc,
        sentence_counts: totals,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Train,
    Test,
}

/// Parses `doc_id<TAB>train|test` lines.
pub fn parse_manifest(text: &str, origin: &str) -> Result<BTreeMap<String, Part>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (doc, part) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, i + 1, "expected doc_id<TAB>train|test"))?;
        let part = match part.trim() {
            "train" => Part::Train,
            "test" => Part::Test,
            other => return Err(Error::parse(origin, i + 1, format!("unknown part {other:?}"))),
        };
        if out.insert(doc.trim().to_string(), part).is_some() {
            return Err(Error::parse(origin, i + 1, format!("duplicate doc_id {doc}")));
        }
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<BTreeMap<String, Part>> {
    parse_manifest(&read(path)?, &path.display().to_string())
}

/// Partitions document ids exactly as the manifest lists them.
pub fn train_test_split<'a>(
    doc_ids: impl IntoIterator<Item = &'a str>,
    manifest: &BTreeMap<String, Part>,
) -> Result<(Vec<String>, Vec<String>)> {
    let ids: Vec<&str> = doc_ids.into_iter().collect();
    let known: HashSet<&str> = ids.iter().copied().collect();
    if let Some(unknown) = manifest.keys().find(|d| !known.contains(d.as_str())) {
        return Err(Error::Data(format!("manifest lists unknown document {unknown}")));
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for id in ids {
        match manifest.get(id) {
            Some(Part::Train) => train.push(id.to_string()),
            Some(Part::Test) => test.push(id.to_string()),
            None => return Err(Error::Data(format!("manifest does not cover document {id}"))),
        }
    }
    Ok((train, test))
}
