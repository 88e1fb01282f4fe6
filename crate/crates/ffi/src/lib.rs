//! C interface to the attitude extraction library.
//!
//! Every fallible function returns an [`AttStatus`]; on failure the message
//! is available from [`att_last_error`] on the same thread. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;
use std::slice;

use attitude::analysis::{kde, silverman_bandwidth};
use attitude::checkpoint::load_model;
use attitude::lexicons::{load_frame_lexicon, parse_frame_lexicon, FrameLexicon};
use attitude::model::AttitudeModel;
use attitude::termizer::{crop_to_window, Term, TermSequence, TokenKind};
use attitude::{Error, Sentiment};

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Data = 5,
    Config = 6,
    Shape = 7,
    Numeric = 8,
    NotAttentive = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttPolarity {
    Positive = 0,
    Negative = 1,
    Neutral = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AttTermKind {
    Word = 0,
    EntitySubj = 1,
    EntityObj = 2,
    EntityOther = 3,
    Frame = 4,
    Punctuation = 5,
    Number = 6,
    Url = 7,
}

/// One context term. `lemma` is read for words and frames only, and
/// `polarity` for frames only.
#[repr(C)]
#[derive(Clone, Copy, Debug)]
pub struct AttTerm {
    pub kind: AttTermKind,
    pub lemma: *const c_char,
    pub polarity: AttPolarity,
}

/// Frame span `[start, end)` over the input lemmas.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttFrameMatch {
    pub start: usize,
    pub end: usize,
    pub polarity: AttPolarity,
}

/// Opaque frame lexicon.
pub struct AttFrameLexicon(FrameLexicon);

/// Opaque trained model.
pub struct AttModel(AttitudeModel);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &Error) -> AttStatus {
    match e {
        Error::Io { .. } => AttStatus::Io,
        Error::Parse { .. } => AttStatus::Parse,
        Error::Config(_) => AttStatus::Config,
        Error::Shape { .. } => AttStatus::Shape,
        Error::NonFinite(_) => AttStatus::Numeric,
        Error::NotAttentive(_) => AttStatus::NotAttentive,
        _ => AttStatus::Data,
    }
}

struct Fail(AttStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

/// Runs `f`, recording the message of any failure or panic.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AttStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AttStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside the attitude library");
            AttStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(AttStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(AttStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], Fail> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

fn to_polarity(s: Sentiment) -> AttPolarity {
    match s {
        Sentiment::Positive => AttPolarity::Positive,
        Sentiment::Negative => AttPolarity::Negative,
        Sentiment::Neutral => AttPolarity::Neutral,
    }
}

fn from_polarity(p: AttPolarity) -> Sentiment {
    match p {
        AttPolarity::Positive => Sentiment::Positive,
        AttPolarity::Negative => Sentiment::Negative,
        AttPolarity::Neutral => Sentiment::Neutral,
    }
}

/// Message of the last failed call on this thread; empty when none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn att_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn att_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a frame lexicon file (`lemma[ lemma...]<TAB>pos|neg|neu`).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn att_frames_load(path: *const c_char, out: *mut *mut AttFrameLexicon) -> AttStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let lex = load_frame_lexicon(Path::new(path))?;
        *out = Box::into_raw(Box::new(AttFrameLexicon(lex)));
        Ok(())
    })
}

/// Parses a frame lexicon from text in the file format.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn att_frames_parse(text: *const c_char, out: *mut *mut AttFrameLexicon) -> AttStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = str_arg(text, "text")?;
        let lex = parse_frame_lexicon(text, "<text>")?;
        *out = Box::into_raw(Box::new(AttFrameLexicon(lex)));
        Ok(())
    })
}

/// Number of entries; 0 for a null handle.
///
/// # Safety
/// `lex` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn att_frames_len(lex: *const AttFrameLexicon) -> usize {
    lex.as_ref().map_or(0, |l| l.0.len())
}

/// Greedy longest-match frame spans over `n` lemmas. Writes at most `cap`
/// matches to `out` and the total count to `written`; when the total
/// exceeds `cap` the call returns `ATT_STATUS_BUFFER_TOO_SMALL`.
///
/// # Safety
/// `lemmas` must point to `n` NUL-terminated strings, `out` to `cap`
/// writable matches, and `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn att_frames_match(
    lex: *const AttFrameLexicon,
    lemmas: *const *const c_char,
    n: usize,
    out: *mut AttFrameMatch,
    cap: usize,
    written: *mut usize,
) -> AttStatus {
    guard(|| {
        let lex = lex.as_ref().ok_or_else(|| null("lexicon"))?;
        if written.is_null() {
            return Err(null("written"));
        }
        let lemmas: Vec<String> = slice_arg(lemmas, n, "lemmas")?
            .iter()
            .map(|&p| str_arg(p, "lemma").map(str::to_string))
            .collect::<Result<_, _>>()?;
        let matches = lex.0.match_frames(&lemmas);
        *written = matches.len();
        if matches.len() > cap {
            return Err(Fail(
                AttStatus::BufferTooSmall,
                format!("{} matches, buffer holds {cap}", matches.len()),
            ));
        }
        if !matches.is_empty() && out.is_null() {
            return Err(null("out"));
        }
        for (i, m) in matches.iter().enumerate() {
            *out.add(i) = AttFrameMatch {
                start: m.start,
                end: m.end,
                polarity: to_polarity(m.polarity),
            };
        }
        Ok(())
    })
}

/// # Safety
/// `lex` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn att_frames_free(lex: *mut AttFrameLexicon) {
    if !lex.is_null() {
        drop(Box::from_raw(lex));
    }
}

/// Loads a checkpoint written by `attitude train` (parameters plus the
/// `.json` sidecar next to it).
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn att_model_load(path: *const c_char, out: *mut *mut AttModel) -> AttStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let path = str_arg(path, "path")?;
        let model = load_model(Path::new(path), None)?;
        *out = Box::into_raw(Box::new(AttModel(model)));
        Ok(())
    })
}

/// Context window n; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn att_model_window(model: *const AttModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.n())
}

/// Size z of the embedded context; 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn att_model_output_size(model: *const AttModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.encoder.output_size())
}

/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn att_model_is_attentive(model: *const AttModel) -> bool {
    model.as_ref().is_some_and(|m| m.0.encoder.kind().is_attentive())
}

unsafe fn sequence(terms: *const AttTerm, n: usize, window: usize) -> Result<TermSequence, Fail> {
    let terms = slice_arg(terms, n, "terms")?;
    let mut out = Vec::with_capacity(terms.len());
    for t in terms {
        let lemma = || str_arg(t.lemma, "lemma").map(str::to_lowercase);
        out.push(match t.kind {
            AttTermKind::Word => Term::Word { lemma: lemma()? },
            AttTermKind::EntitySubj => Term::EntitySubj,
            AttTermKind::EntityObj => Term::EntityObj,
            AttTermKind::EntityOther => Term::EntityOther,
            AttTermKind::Frame => Term::Frame {
                lemma: lemma()?,
                polarity: from_polarity(t.polarity),
            },
            AttTermKind::Punctuation => Term::Token {
                token: TokenKind::Punctuation,
            },
            AttTermKind::Number => Term::Token {
                token: TokenKind::Number,
            },
            AttTermKind::Url => Term::Token { token: TokenKind::Url },
        });
    }
    let position = |wanted: &Term| out.iter().position(|t| t == wanted);
    let (subj_pos, obj_pos) = match (position(&Term::EntitySubj), position(&Term::EntityObj)) {
        (Some(s), Some(o)) => (s, o),
        _ => {
            return Err(Fail(
                AttStatus::Data,
                "context needs one subject and one object entity".into(),
            ))
        }
    };
    let seq = TermSequence {
        surfaces: out.iter().map(Term::label).collect(),
        terms: out,
        subj_pos,
        obj_pos,
    };
    seq.validate()?;
    Ok(crop_to_window(&seq, window)?)
}

/// Class probabilities (positive, negative, neutral) of one context.
/// Contexts longer than the window are cropped around the participants.
///
/// # Safety
/// `terms` must point to `n` terms and `probs` to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn att_model_predict(
    model: *const AttModel,
    terms: *const AttTerm,
    n: usize,
    probs: *mut f64,
) -> AttStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if probs.is_null() {
            return Err(null("probs"));
        }
        let seq = sequence(terms, n, model.0.n())?;
        let p = model.0.predict(&seq)?;
        ptr::copy_nonoverlapping(p.probs.as_ptr(), probs, 3);
        Ok(())
    })
}

/// Attention weights over the (cropped) context terms. Writes the number
/// of terms to `written`; fails with `ATT_STATUS_BUFFER_TOO_SMALL` when it
/// exceeds `cap`.
///
/// # Safety
/// `terms` must point to `n` terms, `alpha` to `cap` writable doubles, and
/// `written` must be valid.
#[no_mangle]
pub unsafe extern "C" fn att_model_alpha(
    model: *const AttModel,
    terms: *const AttTerm,
    n: usize,
    alpha: *mut f64,
    cap: usize,
    written: *mut usize,
) -> AttStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if written.is_null() {
            return Err(null("written"));
        }
        let kind = model.0.encoder.kind();
        if !kind.is_attentive() {
            return Err(Error::NotAttentive(kind.to_string()).into());
        }
        let seq = sequence(terms, n, model.0.n())?;
        let (_, enc) = model.0.predict_full(&seq)?;
        let weights = enc.alpha.ok_or_else(|| Fail::from(Error::NotAttentive(kind.to_string())))?;
        let len = seq.len();
        *written = len;
        if len > cap {
            return Err(Fail(AttStatus::BufferTooSmall, format!("{len} weights, buffer holds {cap}")));
        }
        if alpha.is_null() {
            return Err(null("alpha"));
        }
        ptr::copy_nonoverlapping(weights.as_ptr(), alpha, len);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn att_model_free(model: *mut AttModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Silverman bandwidth 1.06·σ̂·N^(−1/5), floored at 1e-3; NaN when
/// `samples` is null and `n` positive.
///
/// # Safety
/// `samples` must point to `n` doubles.
#[no_mangle]
pub unsafe extern "C" fn att_silverman_bandwidth(samples: *const f64, n: usize) -> f64 {
    match slice_arg(samples, n, "samples") {
        Ok(s) => silverman_bandwidth(s),
        Err(_) => f64::NAN,
    }
}

/// Gaussian kernel density of `samples` at `m` grid points. A bandwidth
/// that is not positive selects Silverman's rule.
///
/// # Safety
/// `samples` must point to `n` doubles, `grid` to `m` doubles and `out` to
/// `m` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn att_kde(
    samples: *const f64,
    n: usize,
    grid: *const f64,
    m: usize,
    bandwidth: f64,
    out: *mut f64,
) -> AttStatus {
    guard(|| {
        let samples = slice_arg(samples, n, "samples")?;
        let grid = slice_arg(grid, m, "grid")?;
        if m > 0 && out.is_null() {
            return Err(null("out"));
        }
        let bw = (bandwidth > 0.0).then_some(bandwidth);
        let density = kde(samples, grid, bw)?;
        if m > 0 {
            ptr::copy_nonoverlapping(density.as_ptr(), out, m);
        }
        Ok(())
    })
}
