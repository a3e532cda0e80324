//! C ABI for kbdistill.
//!
//! Every fallible call returns a `KbStatus`; on failure the message is
//! available from `kb_last_error_message` on the same thread. Strings
//! returned by the library are owned by the caller and released with
//! `kb_string_free`. Corpus handles are released with `kb_corpus_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use kbdistill::analytics::{bleu2, kl_divergence, softly_unique_size};
use kbdistill::cli::training_text;
use kbdistill::corpus::{dedup, load_corpus, save_corpus, Corpus, Event, Relation};
use kbdistill::critic::{
    average_precision, filter_at_threshold, load_scores, recall_at_precision, ScoredLabel,
};
use kbdistill::prompt::{NameAssignment, TemplateSet};
use kbdistill::Error;

/// Result of a library call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    /// Bad configuration, template or argument.
    Config = 3,
    /// Malformed or inconsistent input data.
    Data = 4,
    /// Remote service failure.
    Remote = 5,
    Panic = 6,
}

/// Opaque corpus handle.
pub struct KbCorpus {
    inner: Corpus,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(message));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(error: &Error) -> KbStatus {
    if matches!(
        error,
        Error::UnknownRelation(_) | Error::InvalidEvent { .. } | Error::InvalidInput(_)
    ) {
        return KbStatus::Config;
    }
    match error.exit_code() {
        1 => KbStatus::Config,
        3 => KbStatus::Remote,
        _ => KbStatus::Data,
    }
}

struct Failure(KbStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> KbStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KbStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("panic inside kbdistill".into());
            KbStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(KbStatus::NullPointer, format!("{name} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(KbStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: callers pass either NULL or a valid, writable pointer.
    unsafe { p.as_mut() }.ok_or_else(|| Failure(KbStatus::NullPointer, format!("{name} is NULL")))
}

fn corpus_arg<'a>(p: *const KbCorpus) -> Result<&'a KbCorpus, Failure> {
    // SAFETY: handles come from this library and are live until freed.
    unsafe { p.as_ref() }.ok_or_else(|| Failure(KbStatus::NullPointer, "corpus is NULL".into()))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(KbStatus::Data, "string contains a NUL byte".into()))
}

fn boxed(corpus: Corpus) -> *mut KbCorpus {
    Box::into_raw(Box::new(KbCorpus { inner: corpus }))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn kb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy of the last error raised on this thread, or NULL when the last call
/// succeeded. Free with `kb_string_free`.
#[no_mangle]
pub extern "C" fn kb_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|e| {
        e.borrow()
            .as_ref()
            .map_or(ptr::null_mut(), |m| m.clone().into_raw())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a corpus JSONL file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kb_corpus_load(path: *const c_char, out: *mut *mut KbCorpus) -> KbStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let out = out_arg(out, "out")?;
        *out = boxed(load_corpus(Path::new(path))?);
        Ok(())
    })
}

/// Writes a corpus as JSONL, atomically.
///
/// # Safety
/// `corpus` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn kb_corpus_save(corpus: *const KbCorpus, path: *const c_char) -> KbStatus {
    guard(|| {
        let corpus = corpus_arg(corpus)?;
        save_corpus(&corpus.inner, Path::new(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Number of triples; 0 for NULL.
///
/// # Safety
/// `corpus` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn kb_corpus_len(corpus: *const KbCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.len())
}

/// New handle holding the first occurrence of every triple id.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kb_corpus_dedup(
    corpus: *const KbCorpus,
    out: *mut *mut KbCorpus,
) -> KbStatus {
    guard(|| {
        let corpus = corpus_arg(corpus)?;
        let out = out_arg(out, "out")?;
        *out = boxed(dedup(&corpus.inner));
        Ok(())
    })
}

/// New handle with the triples whose score in `scores_path` is at least
/// `threshold`.
///
/// # Safety
/// `corpus` must be a live handle; `scores_path` a NUL-terminated string;
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kb_corpus_filter(
    corpus: *const KbCorpus,
    scores_path: *const c_char,
    threshold: f64,
    out: *mut *mut KbCorpus,
) -> KbStatus {
    guard(|| {
        let corpus = corpus_arg(corpus)?;
        let scores = load_scores(Path::new(str_arg(scores_path, "scores_path")?))?;
        let out = out_arg(out, "out")?;
        *out = boxed(filter_at_threshold(&corpus.inner, &scores, threshold)?);
        Ok(())
    })
}

/// Sum of soft-unique subset sizes over (event, relation) groups.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kb_corpus_softly_unique_size(
    corpus: *const KbCorpus,
    out: *mut usize,
) -> KbStatus {
    guard(|| {
        let corpus = corpus_arg(corpus)?;
        *out_arg(out, "out")? = softly_unique_size(&corpus.inner);
        Ok(())
    })
}

/// Student training text, one line per triple.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kb_corpus_export(
    corpus: *const KbCorpus,
    out: *mut *mut c_char,
) -> KbStatus {
    guard(|| {
        let corpus = corpus_arg(corpus)?;
        *out_arg(out, "out")? = into_c_string(training_text(&corpus.inner))?;
        Ok(())
    })
}

/// # Safety
/// `corpus` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn kb_corpus_free(corpus: *mut KbCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// BLEU-2 of `candidate` against `n_references` reference strings.
///
/// # Safety
/// `candidate` and each of the `n_references` entries of `references` must be
/// NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kb_bleu2(
    candidate: *const c_char,
    references: *const *const c_char,
    n_references: usize,
    out: *mut f64,
) -> KbStatus {
    guard(|| {
        let candidate = str_arg(candidate, "candidate")?;
        let refs: Vec<&str> = if n_references == 0 {
            Vec::new()
        } else if references.is_null() {
            return Err(Failure(KbStatus::NullPointer, "references is NULL".into()));
        } else {
            std::slice::from_raw_parts(references, n_references)
                .iter()
                .map(|&r| str_arg(r, "reference"))
                .collect::<Result<_, _>>()?
        };
        *out_arg(out, "out")? = bleu2(candidate, &refs)?;
        Ok(())
    })
}

/// Cross-entropy minus entropy.
#[no_mangle]
pub extern "C" fn kb_kl_divergence(h_self: f64, h_cross: f64) -> f64 {
    kl_divergence(h_self, h_cross)
}

unsafe fn scored_labels(
    scores: *const f64,
    accept: *const bool,
    n: usize,
) -> Result<Vec<ScoredLabel>, Failure> {
    if n > 0 && (scores.is_null() || accept.is_null()) {
        return Err(Failure(
            KbStatus::NullPointer,
            "scores or accept is NULL".into(),
        ));
    }
    if n == 0 {
        return Ok(Vec::new());
    }
    let scores = std::slice::from_raw_parts(scores, n);
    let accept = std::slice::from_raw_parts(accept, n);
    Ok(scores
        .iter()
        .zip(accept)
        .enumerate()
        .map(|(i, (&score, &accept))| ScoredLabel {
            // zero-padded so ties fall back to input position
            triple_id: format!("{i:020}"),
            score,
            accept,
        })
        .collect())
}

/// Average precision of `n` scores against accept flags. Ties rank in input
/// order.
///
/// # Safety
/// `scores` and `accept` must point to `n` readable values; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn kb_average_precision(
    scores: *const f64,
    accept: *const bool,
    n: usize,
    out: *mut f64,
) -> KbStatus {
    guard(|| {
        let items = scored_labels(scores, accept, n)?;
        *out_arg(out, "out")? = average_precision(&items)?;
        Ok(())
    })
}

/// Best recall at precision >= `target_precision`.
///
/// # Safety
/// As for `kb_average_precision`.
#[no_mangle]
pub unsafe extern "C" fn kb_recall_at_precision(
    scores: *const f64,
    accept: *const bool,
    n: usize,
    target_precision: f64,
    out: *mut f64,
) -> KbStatus {
    guard(|| {
        let items = scored_labels(scores, accept, n)?;
        *out_arg(out, "out")? = recall_at_precision(&items, target_precision)?;
        Ok(())
    })
}

/// Few-shot inference prompt for `event` (with PersonX/PersonY markers)
/// under `relation` (e.g. "xReact"), using the built-in templates.
///
/// # Safety
/// All string arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kb_render_inference_prompt(
    relation: *const c_char,
    event: *const c_char,
    name_x: *const c_char,
    name_y: *const c_char,
    out: *mut *mut c_char,
) -> KbStatus {
    guard(|| {
        let relation: Relation = str_arg(relation, "relation")?.parse()?;
        let event = Event::new(str_arg(event, "event")?)?;
        let names = NameAssignment::new(str_arg(name_x, "name_x")?, str_arg(name_y, "name_y")?)?;
        let templates = TemplateSet::builtin();
        let template = templates.relation(relation)?;
        let prompt =
            template.render_inference_prompt(&event, template.default_examples(), &names)?;
        *out_arg(out, "out")? = into_c_string(prompt)?;
        Ok(())
    })
}
