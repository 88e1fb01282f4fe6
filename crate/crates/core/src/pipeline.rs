//! Corpus preparation: augmentation, context extraction, termization and
//! cropping into classification samples.

use serde::{Deserialize, Serialize};

use crate::corpus::{augment_neutral, extract_contexts, Document, Opinion, OpinionKey};
use crate::error::{Error, Result};
use crate::lexicons::Lexicons;
use crate::sentiment::Sentiment;
use crate::termizer::{
    build_term_sequence, crop_to_window, group_of, AnalysisGroup, Lemmatizer, MentionSpan, SentenceInput,
    TermSequence,
};

/// One classification instance: a cropped term sequence with its label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextSample {
    pub doc_id: String,
    pub sentence_idx: usize,
    pub source: String,
    pub target: String,
    pub label: Sentiment,
    pub seq: TermSequence,
    /// Analysis group of every term.
    pub groups: Vec<AnalysisGroup>,
}

impl ContextSample {
    pub fn key(&self) -> OpinionKey {
        OpinionKey {
            doc_id: self.doc_id.clone(),
            source: self.source.clone(),
            target: self.target.clone(),
        }
    }

    pub fn subj_pos(&self) -> usize {
        self.seq.subj_pos
    }

    pub fn obj_pos(&self) -> usize {
        self.seq.obj_pos
    }
}

/// Per-document facts needed after preparation: sentence count for fold
/// balancing and the gold opinions (annotated plus augmented neutrals).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocSummary {
    pub doc_id: String,
    pub sentences: usize,
    pub opinions: Vec<Opinion>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PreparedCorpus {
    pub docs: Vec<DocSummary>,
    pub samples: Vec<ContextSample>,
    /// Contexts whose participants did not fit in the window.
    pub dropped: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LabelCounts {
    pub positive: usize,
    pub negative: usize,
    pub neutral: usize,
}

impl PreparedCorpus {
    pub fn label_counts(&self) -> LabelCounts {
        let mut c = LabelCounts::default();
        for s in &self.samples {
            match s.label {
                Sentiment::Positive => c.positive += 1,
                Sentiment::Negative => c.negative += 1,
                Sentiment::Neutral => c.neutral += 1,
            }
        }
        c
    }

    pub fn gold_opinions(&self) -> Vec<Opinion> {
        self.docs.iter().flat_map(|d| d.opinions.iter().cloned()).collect()
    }

    /// Samples and summaries restricted to the given documents.
    pub fn subset(&self, doc_ids: &[String]) -> PreparedCorpus {
        let keep: std::collections::HashSet<&str> = doc_ids.iter().map(String::as_str).collect();
        PreparedCorpus {
            docs: self.docs.iter().filter(|d| keep.contains(d.doc_id.as_str())).cloned().collect(),
            samples: self
                .samples
                .iter()
                .filter(|s| keep.contains(s.doc_id.as_str()))
                .cloned()
                .collect(),
            dropped: 0,
        }
    }
}

/// Lowercased token sequences of every synonym-group variant.
fn variant_tokens(doc: &Document, lemmatizer: &dyn Lemmatizer) -> Vec<Vec<String>> {
    doc.groups
        .iter()
        .flat_map(|g| g.variants.iter())
        .map(|v| v.split_whitespace().map(|t| lemmatizer.lemmatize(t)).collect::<Vec<_>>())
        .filter(|v| !v.is_empty())
        .collect()
}

/// Runs augmentation, extraction, termization and cropping over a corpus.
/// Documents keep input order; samples follow document, opinion and
/// sentence order.
pub fn prepare(
    docs: &[Document],
    annotated: &[Opinion],
    lexicons: &Lexicons,
    lemmatizer: &dyn Lemmatizer,
    n: usize,
) -> Result<PreparedCorpus> {
    if n < 2 {
        return Err(Error::Config(format!("window n must be at least 2, got {n}")));
    }
    let mut out = PreparedCorpus::default();
    for doc in docs {
        let own: Vec<Opinion> = annotated.iter().filter(|o| o.doc_id == doc.doc_id).cloned().collect();
        let opinions = augment_neutral(doc, &own);
        let variants = variant_tokens(doc, lemmatizer);
        for cand in extract_contexts(doc, &opinions) {
            let sentence = &doc.sentences[cand.sentence_idx];
            let in_sentence: Vec<(usize, MentionSpan)> = doc
                .mentions_in(cand.sentence_idx)
                .map(|(i, m)| (i, MentionSpan { start: m.start, end: m.end }))
                .collect();
            let local = |global: usize| in_sentence.iter().position(|(i, _)| *i == global);
            let (Some(subj), Some(obj)) = (local(cand.subj_mention), local(cand.obj_mention)) else {
                return Err(Error::Data(format!("{}: context mention outside its sentence", doc.doc_id)));
            };
            let mentions: Vec<MentionSpan> = in_sentence.iter().map(|(_, m)| *m).collect();
            let input = SentenceInput {
                tokens: &sentence.tokens,
                mentions: &mentions,
                subj,
                obj,
                variants: &variants,
            };
            let full = build_term_sequence(&input, lexicons, lemmatizer)?;
            let seq = match crop_to_window(&full, n) {
                Ok(seq) => seq,
                Err(Error::ContextTooWide { .. }) => {
                    out.dropped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            let groups = seq.terms.iter().map(|t| group_of(t, lexicons)).collect();
            out.samples.push(ContextSample {
                doc_id: doc.doc_id.clone(),
                sentence_idx: cand.sentence_idx,
                source: cand.source,
                target: cand.target,
                label: cand.label,
                seq,
                groups,
            });
        }
        out.docs.push(DocSummary {
            doc_id: doc.doc_id.clone(),
            sentences: doc.sentences.len(),
            opinions,
        });
    }
    Ok(out)
}
