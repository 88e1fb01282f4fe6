//! Line-delimited cache of a prepared corpus.
//!
//! Each line is one JSON record tagged by `record`: a `doc` summary or a
//! `context` sample. Document records precede the contexts they own.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{ContextSample, DocSummary, PreparedCorpus};

#[derive(Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
enum Record {
    Doc(DocSummary),
    Context(ContextSample),
    Meta { dropped: usize },
}

pub fn to_jsonl(corpus: &PreparedCorpus) -> Result<String> {
    let mut out = String::new();
    let mut push = |r: &Record| -> Result<()> {
        let line = serde_json::to_string(r).map_err(|e| Error::Data(format!("cache encode: {e}")))?;
        writeln!(out, "{line}").expect("writing to a String");
        Ok(())
    };
    push(&Record::Meta {
        dropped: corpus.dropped,
    })?;
    for doc in &corpus.docs {
        push(&Record::Doc(doc.clone()))?;
        for s in corpus.samples.iter().filter(|s| s.doc_id == doc.doc_id) {
            push(&Record::Context(s.clone()))?;
        }
    }
    Ok(out)
}

pub fn from_jsonl(text: &str, origin: &str) -> Result<PreparedCorpus> {
    let mut corpus = PreparedCorpus::default();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(line).map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
        match record {
            Record::Meta { dropped } => corpus.dropped = dropped,
            Record::Doc(d) => corpus.docs.push(d),
            Record::Context(s) => {
                if !corpus.docs.iter().any(|d| d.doc_id == s.doc_id) {
                    return Err(Error::parse(origin, i + 1, format!("context for unknown document {}", s.doc_id)));
                }
                if s.groups.len() != s.seq.len() {
                    return Err(Error::parse(origin, i + 1, "groups and terms differ in length"));
                }
                s.seq.validate().map_err(|e| Error::parse(origin, i + 1, e.to_string()))?;
                corpus.samples.push(s);
            }
        }
    }
    Ok(corpus)
}

pub fn write_cache(path: &Path, corpus: &PreparedCorpus) -> Result<()> {
    fs::write(path, to_jsonl(corpus)?).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: &Path) -> Result<PreparedCorpus> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_jsonl(&text, &path.display().to_string())
}
