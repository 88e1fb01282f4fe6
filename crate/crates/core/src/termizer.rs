//! Turns a sentence with annotated mentions into a masked term sequence.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicons::{apply_negation, Lexicons};
use crate::sentiment::Sentiment;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenKind {
    Punctuation,
    Number,
    Url,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Term {
    Word { lemma: String },
    EntitySubj,
    EntityObj,
    EntityOther,
    Frame { lemma: String, polarity: Sentiment },
    Token { token: TokenKind },
}

impl Term {
    pub fn word(lemma: impl Into<String>) -> Self {
        Term::Word {
            lemma: lemma.into(),
        }
    }

    /// Short display name; masks print their class instead of a surface.
    pub fn label(&self) -> String {
        match self {
            Term::Word { lemma } => lemma.clone(),
            Term::EntitySubj => "E_subj".into(),
            Term::EntityObj => "E_obj".into(),
            Term::EntityOther => "E".into(),
            Term::Frame { lemma, polarity } => format!("{lemma}[{}]", polarity.short()),
            Term::Token { token } => match token {
                TokenKind::Punctuation => "<punct>".into(),
                TokenKind::Number => "<num>".into(),
                TokenKind::Url => "<url>".into(),
            },
        }
    }

    pub fn is_entity(&self) -> bool {
        matches!(self, Term::EntitySubj | Term::EntityObj | Term::EntityOther)
    }
}

/// Masked terms of one context with the participant positions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSequence {
    pub terms: Vec<Term>,
    /// Surface text behind each term (mentions and frames joined by spaces).
    pub surfaces: Vec<String>,
    pub subj_pos: usize,
    pub obj_pos: usize,
}

impl TermSequence {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Positions of frame terms, in order.
    pub fn frame_positions(&self) -> Vec<usize> {
        self.terms
            .iter()
            .enumerate()
            .filter(|(_, t)| matches!(t, Term::Frame { .. }))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let ok = !self.terms.is_empty()
            && self.surfaces.len() == self.terms.len()
            && self.subj_pos != self.obj_pos
            && self.terms.get(self.subj_pos) == Some(&Term::EntitySubj)
            && self.terms.get(self.obj_pos) == Some(&Term::EntityObj)
            && self.terms.iter().filter(|t| **t == Term::EntitySubj).count() == 1
            && self.terms.iter().filter(|t| **t == Term::EntityObj).count() == 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Data("term sequence violates participant invariants".into()))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum AnalysisGroup {
    Prep,
    Frames,
    Sentiment,
    Other,
}

impl AnalysisGroup {
    pub const ALL: [AnalysisGroup; 4] = [
        AnalysisGroup::Prep,
        AnalysisGroup::Frames,
        AnalysisGroup::Sentiment,
        AnalysisGroup::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AnalysisGroup::Prep => "PREP",
            AnalysisGroup::Frames => "FRAMES",
            AnalysisGroup::Sentiment => "SENTIMENT",
            AnalysisGroup::Other => "OTHER",
        }
    }
}

/// Maps a surface token to its lemma.
pub trait Lemmatizer: Send + Sync {
    fn lemmatize(&self, token: &str) -> String;
}

/// Default lemmatizer: Unicode lowercasing.
#[derive(Clone, Copy, Debug, Default)]
pub struct LowercaseLemmatizer;

impl Lemmatizer for LowercaseLemmatizer {
    fn lemmatize(&self, token: &str) -> String {
        token.to_lowercase()
    }
}

pub fn lemmatize(token: &str) -> String {
    LowercaseLemmatizer.lemmatize(token)
}

fn is_punct(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(
            c,
            '«' | '»' | '—' | '–' | '…' | '“' | '”' | '„' | '‘' | '’' | '¡' | '¿' | '·'
        )
}

/// Url beats number beats punctuation.
pub fn classify_token(token: &str) -> Option<TokenKind> {
    let lower = token.to_lowercase();
    if ["http://", "https://", "www."].iter().any(|p| lower.starts_with(p)) {
        return Some(TokenKind::Url);
    }
    let numeric_chars = token
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    if numeric_chars && token.chars().any(|c| c.is_ascii_digit()) && token.parse::<f64>().is_ok() {
        return Some(TokenKind::Number);
    }
    if !token.is_empty() && token.chars().all(is_punct) {
        return Some(TokenKind::Punctuation);
    }
    None
}

/// Mention span `[start, end)` inside one sentence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MentionSpan {
    pub start: usize,
    pub end: usize,
}

/// Inputs for [`build_term_sequence`].
pub struct SentenceInput<'a> {
    pub tokens: &'a [String],
    /// Every annotated mention of the sentence, non-overlapping.
    pub mentions: &'a [MentionSpan],
    /// Indices into `mentions` of the chosen participants.
    pub subj: usize,
    pub obj: usize,
    /// Lowercased token sequences of all synonym-group variants; unannotated
    /// occurrences are masked as other entities.
    pub variants: &'a [Vec<String>],
}

/// Maps every token to a term: the chosen participants become subject and
/// object masks, other mentions become entity masks, frame spans collapse to
/// one polarity-carrying term, and the rest become tokens or lemmatized words.
pub fn build_term_sequence(
    input: &SentenceInput<'_>,
    lexicons: &Lexicons,
    lemmatizer: &dyn Lemmatizer,
) -> Result<TermSequence> {
    let n = input.tokens.len();
    if input.subj >= input.mentions.len() {
        return Err(Error::Data("subject mention absent".into()));
    }
    if input.obj >= input.mentions.len() {
        return Err(Error::Data("object mention absent".into()));
    }
    if input.subj == input.obj {
        return Err(Error::Data("subject and object mention coincide".into()));
    }

    #[derive(Clone, Copy, PartialEq)]
    enum Slot {
        Free,
        Subj,
        Obj,
        Other,
    }
    // (kind, span end) for the first token of each entity span
    let mut slots = vec![(Slot::Free, 0usize); n];
    let mut covered = vec![false; n];
    for (i, m) in input.mentions.iter().enumerate() {
        if m.start >= m.end || m.end > n {
            return Err(Error::Data(format!("mention {}..{} out of sentence", m.start, m.end)));
        }
        let kind = if i == input.subj {
            Slot::Subj
        } else if i == input.obj {
            Slot::Obj
        } else {
            Slot::Other
        };
        slots[m.start] = (kind, m.end);
        covered[m.start..m.end].iter_mut().for_each(|c| *c = true);
    }

    let lemmas: Vec<String> = input.tokens.iter().map(|t| lemmatizer.lemmatize(t)).collect();

    // unannotated variant occurrences, longest first
    let mut variants: Vec<&Vec<String>> = input.variants.iter().filter(|v| !v.is_empty()).collect();
    variants.sort_by(|a, b| b.len().cmp(&a.len()));
    let mut i = 0;
    while i < n {
        if covered[i] {
            i += 1;
            continue;
        }
        let hit = variants.iter().find(|v| {
            i + v.len() <= n
                && (i..i + v.len()).all(|j| !covered[j])
                && v.iter()
                    .zip(&lemmas[i..i + v.len()])
                    .all(|(a, b)| a.to_lowercase() == b.to_lowercase())
        });
        match hit {
            Some(v) => {
                slots[i] = (Slot::Other, i + v.len());
                covered[i..i + v.len()].iter_mut().for_each(|c| *c = true);
                i += v.len();
            }
            None => i += 1,
        }
    }

    // frames inside maximal runs of uncovered tokens
    let mut frame_at: Vec<Option<(usize, Sentiment)>> = vec![None; n];
    let mut start = 0;
    while start < n {
        if covered[start] {
            start += 1;
            continue;
        }
        let mut end = start;
        while end < n && !covered[end] {
            end += 1;
        }
        for m in lexicons.frames.match_frames(&lemmas[start..end]) {
            let (a, b) = (start + m.start, start + m.end);
            let prev = a.checked_sub(1).filter(|&p| !covered[p]).map(|p| lemmas[p].as_str());
            frame_at[a] = Some((b, apply_negation(m.polarity, prev, &lexicons.negation)));
        }
        start = end;
    }

    let mut terms = Vec::with_capacity(n);
    let mut surfaces = Vec::with_capacity(n);
    let (mut subj_pos, mut obj_pos) = (None, None);
    let mut i = 0;
    while i < n {
        let (slot, span_end) = slots[i];
        if slot != Slot::Free {
            let term = match slot {
                Slot::Subj => {
                    subj_pos = Some(terms.len());
                    Term::EntitySubj
                }
                Slot::Obj => {
                    obj_pos = Some(terms.len());
                    Term::EntityObj
                }
                _ => Term::EntityOther,
            };
            terms.push(term);
            surfaces.push(input.tokens[i..span_end].join(" "));
            i = span_end;
        } else if let Some((end, polarity)) = frame_at[i] {
            terms.push(Term::Frame {
                lemma: lemmas[i..end].join(" "),
                polarity,
            });
            surfaces.push(input.tokens[i..end].join(" "));
            i = end;
        } else {
            let term = match classify_token(&input.tokens[i]) {
                Some(token) => Term::Token { token },
                None => Term::Word {
                    lemma: lemmas[i].clone(),
                },
            };
            terms.push(term);
            surfaces.push(input.tokens[i].clone());
            i += 1;
        }
    }
    let seq = TermSequence {
        terms,
        surfaces,
        subj_pos: subj_pos.ok_or_else(|| Error::Data("subject mention absent".into()))?,
        obj_pos: obj_pos.ok_or_else(|| Error::Data("object mention absent".into()))?,
    };
    seq.validate()?;
    Ok(seq)
}

/// Crops to at most `n` terms around the midpoint of the participants.
/// Fails with [`Error::ContextTooWide`] when both cannot fit.
pub fn crop_to_window(seq: &TermSequence, n: usize) -> Result<TermSequence> {
    if seq.len() <= n {
        return Ok(seq.clone());
    }
    let lo = seq.subj_pos.min(seq.obj_pos);
    let hi = seq.subj_pos.max(seq.obj_pos);
    let span = hi - lo + 1;
    if span > n {
        return Err(Error::ContextTooWide { span, window: n });
    }
    let center = (lo + hi) / 2;
    let min_start = (hi + 1).saturating_sub(n);
    let max_start = lo.min(seq.len() - n);
    let start = center.saturating_sub(n / 2).clamp(min_start, max_start);
    Ok(TermSequence {
        terms: seq.terms[start..start + n].to_vec(),
        surfaces: seq.surfaces[start..start + n].to_vec(),
        subj_pos: seq.subj_pos - start,
        obj_pos: seq.obj_pos - start,
    })
}

/// Frames first, then sentiment words, then prepositions.
pub fn group_of(term: &Term, lexicons: &Lexicons) -> AnalysisGroup {
    match term {
        Term::Frame { .. } => AnalysisGroup::Frames,
        Term::Word { lemma } if lexicons.sentiment.contains(lemma) => AnalysisGroup::Sentiment,
        Term::Word { lemma } if lexicons.prepositions.contains(lemma) => AnalysisGroup::Prep,
        _ => AnalysisGroup::Other,
    }
}
