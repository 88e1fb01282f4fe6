//! Frame, sentiment-word and preposition lexicons.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sentiment::Sentiment;

pub const DEFAULT_NEGATION: &str = "не";

/// A (possibly multi-word) frame entry with its A0→A1 polarity.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameEntry {
    pub lemmas: Vec<String>,
    pub polarity: Sentiment,
}

#[derive(Clone, Debug, Default)]
pub struct FrameLexicon {
    entries: HashMap<Vec<String>, Sentiment>,
    max_entry_len: usize,
}

/// A matched frame span `[start, end)` over a lemma sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameMatch {
    pub start: usize,
    pub end: usize,
    pub polarity: Sentiment,
}

impl FrameLexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: impl IntoIterator<Item = FrameEntry>) -> Result<Self> {
        let mut lex = Self::new();
        for e in entries {
            lex.insert(e)?;
        }
        Ok(lex)
    }

    pub fn insert(&mut self, entry: FrameEntry) -> Result<()> {
        if entry.lemmas.is_empty() || entry.lemmas.iter().any(|l| l.is_empty()) {
            return Err(Error::Data("frame entry needs non-empty lemmas".into()));
        }
        let key: Vec<String> = entry.lemmas.iter().map(|l| l.to_lowercase()).collect();
        if self.entries.contains_key(&key) {
            return Err(Error::Data(format!("duplicate frame entry {:?}", key.join(" "))));
        }
        self.max_entry_len = self.max_entry_len.max(key.len());
        self.entries.insert(key, entry.polarity);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn max_entry_len(&self) -> usize {
        self.max_entry_len
    }

    pub fn get(&self, lemmas: &[String]) -> Option<Sentiment> {
        self.entries.get(lemmas).copied()
    }

    /// Entries sorted by lemma sequence.
    pub fn entries(&self) -> Vec<FrameEntry> {
        let mut out: Vec<FrameEntry> = self
            .entries
            .iter()
            .map(|(k, &p)| FrameEntry {
                lemmas: k.clone(),
                polarity: p,
            })
            .collect();
        out.sort_by(|a, b| a.lemmas.cmp(&b.lemmas));
        out
    }

    /// Greedy left-to-right longest match; spans never overlap.
    pub fn match_frames(&self, lemmas: &[String]) -> Vec<FrameMatch> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < lemmas.len() {
            let longest = (1..=self.max_entry_len.min(lemmas.len() - i))
                .rev()
                .find_map(|len| self.get(&lemmas[i..i + len]).map(|p| (len, p)));
            match longest {
                Some((len, polarity)) => {
                    out.push(FrameMatch {
                        start: i,
                        end: i + len,
                        polarity,
                    });
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

/// Parses `lemma[ lemma...]<TAB>pos|neg|neu` lines.
pub fn parse_frame_lexicon(text: &str, origin: &str) -> Result<FrameLexicon> {
    let mut lex = FrameLexicon::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (entry, pol) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(origin, lineno, "expected entry<TAB>polarity"))?;
        let polarity = match pol.trim() {
            "pos" => Sentiment::Positive,
            "neg" => Sentiment::Negative,
            "neu" => Sentiment::Neutral,
            other => {
                return Err(Error::parse(
                    origin,
                    lineno,
                    format!("unknown polarity token {other:?}"),
                ))
            }
        };
        let lemmas: Vec<String> = entry.split_whitespace().map(str::to_lowercase).collect();
        if lemmas.is_empty() {
            return Err(Error::parse(origin, lineno, "empty frame entry"));
        }
        lex.insert(FrameEntry { lemmas, polarity })
            .map_err(|e| Error::parse(origin, lineno, e.to_string()))?;
    }
    Ok(lex)
}

pub fn load_frame_lexicon(path: &Path) -> Result<FrameLexicon> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_frame_lexicon(&text, &path.display().to_string())
}

/// Flips positive and negative when the preceding lemma is the negation
/// particle.
pub fn apply_negation(polarity: Sentiment, preceding: Option<&str>, negation: &str) -> Sentiment {
    match preceding {
        Some(p) if p == negation => polarity.inverted(),
        _ => polarity,
    }
}

/// Case-folded lemma set used for the sentiment lexicon and the preposition list.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LemmaSet {
    lemmas: HashSet<String>,
}

pub type SentimentLexicon = LemmaSet;
pub type PrepositionList = LemmaSet;

impl LemmaSet {
    pub fn from_lemmas<I, S>(lemmas: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        LemmaSet {
            lemmas: lemmas
                .into_iter()
                .map(|l| l.as_ref().trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        }
    }

    pub fn contains(&self, lemma: &str) -> bool {
        self.lemmas.contains(&lemma.to_lowercase())
    }

    pub fn len(&self) -> usize {
        self.lemmas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lemmas.is_empty()
    }

    pub fn sorted(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.lemmas.iter().map(String::as_str).collect();
        v.sort();
        v
    }
}

/// One lemma per line.
pub fn load_lemma_set(path: &Path) -> Result<LemmaSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(LemmaSet::from_lemmas(text.lines()))
}

pub fn in_sentiment_lexicon(lemma: &str, lex: &SentimentLexicon) -> bool {
    lex.contains(lemma)
}

pub fn is_preposition(lemma: &str, list: &PrepositionList) -> bool {
    list.contains(lemma)
}

/// All lexical resources the termizer consults.
#[derive(Clone, Debug)]
pub struct Lexicons {
    pub frames: FrameLexicon,
    pub sentiment: SentimentLexicon,
    pub prepositions: PrepositionList,
    pub negation: String,
}

impl Default for Lexicons {
    fn default() -> Self {
        Lexicons {
            frames: FrameLexicon::new(),
            sentiment: LemmaSet::default(),
            prepositions: LemmaSet::default(),
            negation: DEFAULT_NEGATION.to_string(),
        }
    }
}

impl Lexicons {
    pub fn load(frames: &Path, sentiment: &Path, prepositions: &Path) -> Result<Self> {
        Ok(Lexicons {
            frames: load_frame_lexicon(frames)?,
            sentiment: load_lemma_set(sentiment)?,
            prepositions: load_lemma_set(prepositions)?,
            negation: DEFAULT_NEGATION.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lemmas(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn load_two_entries_and_errors() {
        let lex = parse_frame_lexicon("condemn\tneg\ngive up\tneg\n", "f").unwrap();
        assert_eq!(lex.len(), 2);
        assert_eq!(lex.max_entry_len(), 2);
        assert!(matches!(
            parse_frame_lexicon("a\tpos\na\tneg\n", "f"),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(parse_frame_lexicon("a\tup\n", "f").is_err());
        assert!(parse_frame_lexicon("a pos\n", "f").is_err());
    }

    #[test]
    fn single_match() {
        let lex = parse_frame_lexicon("condemn\tneg\n", "f").unwrap();
        let m = lex.match_frames(&lemmas("the senate condemn it"));
        assert_eq!(
            m,
            vec![FrameMatch {
                start: 2,
                end: 3,
                polarity: Sentiment::Negative
            }]
        );
        assert!(lex.match_frames(&lemmas("nothing here")).is_empty());
    }

    #[test]
    fn longest_wins() {
        let lex = parse_frame_lexicon("give\tneu\ngive up\tneg\n", "f").unwrap();
        let m = lex.match_frames(&lemmas("give up"));
        assert_eq!(m.len(), 1);
        assert_eq!((m[0].start, m[0].end, m[0].polarity), (0, 2, Sentiment::Negative));
    }

    #[test]
    fn negation() {
        assert_eq!(apply_negation(Sentiment::Positive, Some("не"), DEFAULT_NEGATION), Sentiment::Negative);
        assert_eq!(apply_negation(Sentiment::Negative, Some("the"), DEFAULT_NEGATION), Sentiment::Negative);
        assert_eq!(apply_negation(Sentiment::Neutral, Some("не"), DEFAULT_NEGATION), Sentiment::Neutral);
        assert_eq!(apply_negation(Sentiment::Positive, None, DEFAULT_NEGATION), Sentiment::Positive);
        for p in Sentiment::ALL {
            let twice = apply_negation(apply_negation(p, Some("не"), "не"), Some("не"), "не");
            assert_eq!(twice, p);
        }
    }

    #[test]
    fn lemma_sets_are_case_folded() {
        let s = LemmaSet::from_lemmas(["Хороший", "bad", ""]);
        assert_eq!(s.len(), 2);
        assert!(in_sentiment_lexicon("хороший", &s));
        assert!(in_sentiment_lexicon("BAD", &s));
        assert!(!in_sentiment_lexicon("good", &s));
        let p = LemmaSet::from_lemmas(["в"]);
        assert!(is_preposition("в", &p));
        assert!(!is_preposition("на", &p));
    }
}
