//! C ABI for the asklearn crate.
//!
//! Conventions:
//! - Every constructor returns a status code and writes an opaque handle
//!   through an out-pointer; handles are freed with the matching `_free`.
//! - Strings returned through out-pointers are heap-allocated NUL-terminated
//!   UTF-8 and must be released with `asklearn_string_free`.
//! - On any non-zero status the thread-local message from
//!   `asklearn_last_error` describes the failure.
//!
//! The matching declarations live in `include/asklearn.h`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::{c_char, c_int};
use std::panic::{catch_unwind, AssertUnwindSafe};

use asklearn::eval::accuracy;
use asklearn::kb::{generate_kb, parse_kb, KbGenConfig, KnowledgeBase, Split, TaskId};
use asklearn::memnet::{Model, Tokenizer};
use asklearn::simulator::{
    generate_dataset, parse_corpus, write_corpus, Corpus, DatasetSpec, Regime, StudentScript,
};
use asklearn::train_offline::{train_question_asker, train_rbi, train_rbi_fp, TrainConfig};

/// Status codes shared with the C header; keep the two lists in sync.
pub const ASKLEARN_OK: c_int = 0;
pub const ASKLEARN_ERR_NULL: c_int = 1;
pub const ASKLEARN_ERR_UTF8: c_int = 2;
pub const ASKLEARN_ERR_INVALID: c_int = 3;
pub const ASKLEARN_ERR_PARSE: c_int = 4;
pub const ASKLEARN_ERR_TRAIN: c_int = 5;
pub const ASKLEARN_ERR_EVAL: c_int = 6;
pub const ASKLEARN_ERR_PANIC: c_int = 7;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    // NUL bytes cannot appear in our error text, but stay defensive.
    let cleaned: String = msg.chars().filter(|&c| c != '\0').collect();
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(cleaned).unwrap());
}

fn fail(code: c_int, msg: &str) -> c_int {
    set_error(msg);
    code
}

/// Opaque knowledge-base handle.
pub struct AskKb(KnowledgeBase);
/// Opaque dialogue-corpus handle.
pub struct AskCorpus(Corpus);
/// Opaque trained-model handle.
pub struct AskModel(Model);

/// Run `f`, converting panics into `ASKLEARN_ERR_PANIC` instead of unwinding
/// across the C boundary.
fn guarded(f: impl FnOnce() -> c_int) -> c_int {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(code) => code,
        Err(_) => fail(ASKLEARN_ERR_PANIC, "internal panic"),
    }
}

unsafe fn str_arg<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, c_int> {
    if ptr.is_null() {
        return Err(fail(ASKLEARN_ERR_NULL, &format!("{name} is NULL")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(ASKLEARN_ERR_UTF8, &format!("{name} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(ptr: *const T, name: &str) -> Result<&'a T, c_int> {
    if ptr.is_null() {
        Err(fail(ASKLEARN_ERR_NULL, &format!("{name} is NULL")))
    } else {
        Ok(&*ptr)
    }
}

fn out_string(text: String, out: *mut *mut c_char) -> c_int {
    if out.is_null() {
        return fail(ASKLEARN_ERR_NULL, "out is NULL");
    }
    match CString::new(text) {
        Ok(s) => {
            unsafe { *out = s.into_raw() };
            ASKLEARN_OK
        }
        Err(_) => fail(ASKLEARN_ERR_INVALID, "text contains interior NUL"),
    }
}

fn out_handle<T>(value: T, out: *mut *mut T) -> c_int {
    if out.is_null() {
        return fail(ASKLEARN_ERR_NULL, "out is NULL");
    }
    unsafe { *out = Box::into_raw(Box::new(value)) };
    ASKLEARN_OK
}

/// Message describing the most recent failure on this thread. The pointer is
/// owned by the library and stays valid until the next failing call.
#[no_mangle]
pub extern "C" fn asklearn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Release a string returned by this library. NULL is a no-op.
#[no_mangle]
pub unsafe extern "C" fn asklearn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

// ---------------------------------------------------------------- knowledge base

/// Generate a synthetic movie knowledge base.
#[no_mangle]
pub unsafe extern "C" fn asklearn_kb_generate(
    n_movies: usize,
    n_people: usize,
    seed: u64,
    out: *mut *mut AskKb,
) -> c_int {
    guarded(|| {
        let cfg = KbGenConfig { n_movies, n_people, seed };
        match generate_kb(&cfg) {
            Ok(kb) => out_handle(AskKb(kb), out),
            Err(e) => fail(ASKLEARN_ERR_INVALID, &e.to_string()),
        }
    })
}

/// Parse a knowledge base from its textual form.
#[no_mangle]
pub unsafe extern "C" fn asklearn_kb_parse(text: *const c_char, out: *mut *mut AskKb) -> c_int {
    guarded(|| {
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(c) => return c,
        };
        match parse_kb(text) {
            Ok(kb) => out_handle(AskKb(kb), out),
            Err(e) => fail(ASKLEARN_ERR_PARSE, &e.to_string()),
        }
    })
}

/// Serialize a knowledge base; the result round-trips through
/// `asklearn_kb_parse`.
#[no_mangle]
pub unsafe extern "C" fn asklearn_kb_write(kb: *const AskKb, out: *mut *mut c_char) -> c_int {
    guarded(|| match ref_arg(kb, "kb") {
        Ok(kb) => out_string(kb.0.write(), out),
        Err(c) => c,
    })
}

/// Number of entities in the knowledge base.
#[no_mangle]
pub unsafe extern "C" fn asklearn_kb_entity_count(kb: *const AskKb, out: *mut usize) -> c_int {
    guarded(|| {
        let kb = match ref_arg(kb, "kb") {
            Ok(kb) => kb,
            Err(c) => return c,
        };
        if out.is_null() {
            return fail(ASKLEARN_ERR_NULL, "out is NULL");
        }
        *out = kb.0.entities().len();
        ASKLEARN_OK
    })
}

#[no_mangle]
pub unsafe extern "C" fn asklearn_kb_free(kb: *mut AskKb) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

// --------------------------------------------------------------------- corpus

fn parse_regime_ci(s: &str) -> Option<Regime> {
    match s.to_ascii_lowercase().as_str() {
        "qa" => Some(Regime::Qa),
        "aq" => Some(Regime::Aq),
        "mix" => Some(Regime::Mix),
        _ => None,
    }
}

fn parse_task(task: u8) -> Result<TaskId, c_int> {
    TaskId::new(task).ok_or_else(|| fail(ASKLEARN_ERR_INVALID, "task must be 1..=9"))
}

/// Generate a dialogue corpus for one task/regime/split.
///
/// `regime` is one of "qa", "aq", "mix"; `split` is "train", "dev" or "test".
/// `p_answer` / `p_relevant` are the scripted student's probabilities of
/// answering correctly and of asking a pertinent question (ignored on the
/// test split, which always uses 1.0).
#[no_mangle]
pub unsafe extern "C" fn asklearn_corpus_generate(
    kb: *const AskKb,
    task: u8,
    regime: *const c_char,
    split: *const c_char,
    n_episodes: usize,
    seed: u64,
    p_answer: f64,
    p_relevant: f64,
    out: *mut *mut AskCorpus,
) -> c_int {
    guarded(|| {
        let kb = match ref_arg(kb, "kb") {
            Ok(kb) => kb,
            Err(c) => return c,
        };
        let task = match parse_task(task) {
            Ok(t) => t,
            Err(c) => return c,
        };
        let regime = match str_arg(regime, "regime") {
            // Core regime names are capitalized (QA/AQ/Mix); accept any case here.
            Ok(s) => match parse_regime_ci(s) {
                Some(r) => r,
                None => return fail(ASKLEARN_ERR_INVALID, "regime must be qa, aq or mix"),
            },
            Err(c) => return c,
        };
        let split = match str_arg(split, "split") {
            Ok(s) => match Split::parse(s) {
                Some(s) => s,
                None => return fail(ASKLEARN_ERR_INVALID, "split must be train, dev or test"),
            },
            Err(c) => return c,
        };
        if !(0.0..=1.0).contains(&p_answer) || !(0.0..=1.0).contains(&p_relevant) {
            return fail(ASKLEARN_ERR_INVALID, "probabilities must lie in [0, 1]");
        }
        let spec = DatasetSpec {
            task,
            regime,
            split,
            n_episodes,
            seed,
            script: StudentScript { p_correct_answer: p_answer, p_relevant_question: p_relevant },
        };
        match generate_dataset(&spec, &kb.0) {
            Ok(corpus) => out_handle(AskCorpus(corpus), out),
            Err(e) => fail(ASKLEARN_ERR_INVALID, &e.to_string()),
        }
    })
}

/// Parse a corpus from its textual form.
#[no_mangle]
pub unsafe extern "C" fn asklearn_corpus_parse(
    text: *const c_char,
    out: *mut *mut AskCorpus,
) -> c_int {
    guarded(|| {
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(c) => return c,
        };
        match parse_corpus(text) {
            Ok(corpus) => out_handle(AskCorpus(corpus), out),
            Err(e) => fail(ASKLEARN_ERR_PARSE, &e.to_string()),
        }
    })
}

/// Serialize a corpus; the result round-trips through
/// `asklearn_corpus_parse`.
#[no_mangle]
pub unsafe extern "C" fn asklearn_corpus_write(
    corpus: *const AskCorpus,
    out: *mut *mut c_char,
) -> c_int {
    guarded(|| match ref_arg(corpus, "corpus") {
        Ok(corpus) => out_string(write_corpus(&corpus.0), out),
        Err(c) => c,
    })
}

/// Number of episodes in the corpus.
#[no_mangle]
pub unsafe extern "C" fn asklearn_corpus_len(corpus: *const AskCorpus, out: *mut usize) -> c_int {
    guarded(|| {
        let corpus = match ref_arg(corpus, "corpus") {
            Ok(c) => c,
            Err(c) => return c,
        };
        if out.is_null() {
            return fail(ASKLEARN_ERR_NULL, "out is NULL");
        }
        *out = corpus.0.episodes.len();
        ASKLEARN_OK
    })
}

#[no_mangle]
pub unsafe extern "C" fn asklearn_corpus_free(corpus: *mut AskCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

// ---------------------------------------------------------------------- model

/// Train a memory network on `train`, selecting the best epoch on `dev`.
///
/// `kind` is one of:
/// - "rbi"    — reward-based imitation of positively rewarded answers
/// - "rbi+fp" — imitation plus the forward-prediction auxiliary loss
/// - "asker"  — binary ask/keep-quiet policy trained by imitation
///
/// `epochs == 0` keeps the built-in default.
#[no_mangle]
pub unsafe extern "C" fn asklearn_train(
    kind: *const c_char,
    train: *const AskCorpus,
    dev: *const AskCorpus,
    kb: *const AskKb,
    epochs: usize,
    seed: u64,
    out: *mut *mut AskModel,
) -> c_int {
    guarded(|| {
        let kind = match str_arg(kind, "kind") {
            Ok(k) => k,
            Err(c) => return c,
        };
        let train = match ref_arg(train, "train") {
            Ok(t) => t,
            Err(c) => return c,
        };
        let dev = match ref_arg(dev, "dev") {
            Ok(d) => d,
            Err(c) => return c,
        };
        let kb = match ref_arg(kb, "kb") {
            Ok(kb) => kb,
            Err(c) => return c,
        };
        let mut cfg = TrainConfig { seed, ..Default::default() };
        if epochs > 0 {
            cfg.epochs = epochs;
        }
        let result = match kind {
            "rbi" => train_rbi(&train.0, &dev.0, &kb.0, &cfg),
            "rbi+fp" => train_rbi_fp(&train.0, &dev.0, &kb.0, &cfg),
            "asker" => train_question_asker(&train.0, &dev.0, &kb.0, &cfg),
            _ => return fail(ASKLEARN_ERR_INVALID, "kind must be rbi, rbi+fp or asker"),
        };
        match result {
            Ok(run) => out_handle(AskModel(run.model), out),
            Err(e) => fail(ASKLEARN_ERR_TRAIN, &e.to_string()),
        }
    })
}

/// Serialize a model checkpoint; round-trips through `asklearn_model_load`.
#[no_mangle]
pub unsafe extern "C" fn asklearn_model_save(
    model: *const AskModel,
    out: *mut *mut c_char,
) -> c_int {
    guarded(|| match ref_arg(model, "model") {
        Ok(model) => out_string(model.0.save(), out),
        Err(c) => c,
    })
}

/// Load a model checkpoint produced by `asklearn_model_save`.
#[no_mangle]
pub unsafe extern "C" fn asklearn_model_load(
    text: *const c_char,
    out: *mut *mut AskModel,
) -> c_int {
    guarded(|| {
        let text = match str_arg(text, "text") {
            Ok(t) => t,
            Err(c) => return c,
        };
        match Model::load(text) {
            Ok(model) => out_handle(AskModel(model), out),
            Err(e) => fail(ASKLEARN_ERR_PARSE, &e.to_string()),
        }
    })
}

/// Greedy answer accuracy of `model` on `corpus`, written to `out`.
#[no_mangle]
pub unsafe extern "C" fn asklearn_accuracy(
    model: *const AskModel,
    corpus: *const AskCorpus,
    kb: *const AskKb,
    out: *mut f64,
) -> c_int {
    guarded(|| {
        let model = match ref_arg(model, "model") {
            Ok(m) => m,
            Err(c) => return c,
        };
        let corpus = match ref_arg(corpus, "corpus") {
            Ok(c) => c,
            Err(c) => return c,
        };
        let kb = match ref_arg(kb, "kb") {
            Ok(kb) => kb,
            Err(c) => return c,
        };
        if out.is_null() {
            return fail(ASKLEARN_ERR_NULL, "out is NULL");
        }
        let tok = Tokenizer::new(&kb.0);
        match accuracy(&model.0, &corpus.0, &tok) {
            Ok(acc) => {
                *out = acc;
                ASKLEARN_OK
            }
            Err(e) => fail(ASKLEARN_ERR_EVAL, &e.to_string()),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn asklearn_model_free(model: *mut AskModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::ptr;

    fn cstr(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    fn ok(code: c_int) {
        if code != ASKLEARN_OK {
            let msg = unsafe { CStr::from_ptr(asklearn_last_error()) };
            panic!("status {code}: {}", msg.to_string_lossy());
        }
    }

    fn gen_kb() -> *mut AskKb {
        let mut kb = ptr::null_mut();
        let code = unsafe { asklearn_kb_generate(200, 150, 0, &mut kb) };
        assert_eq!(code, ASKLEARN_OK);
        kb
    }

    #[test]
    fn kb_round_trips_through_text() {
        let kb = gen_kb();
        let mut text = ptr::null_mut();
        assert_eq!(unsafe { asklearn_kb_write(kb, &mut text) }, ASKLEARN_OK);
        let mut kb2 = ptr::null_mut();
        assert_eq!(unsafe { asklearn_kb_parse(text, &mut kb2) }, ASKLEARN_OK);
        let mut text2 = ptr::null_mut();
        assert_eq!(unsafe { asklearn_kb_write(kb2, &mut text2) }, ASKLEARN_OK);
        let (a, b) = unsafe { (CStr::from_ptr(text), CStr::from_ptr(text2)) };
        assert_eq!(a, b);
        unsafe {
            asklearn_string_free(text);
            asklearn_string_free(text2);
            asklearn_kb_free(kb);
            asklearn_kb_free(kb2);
        }
    }

    #[test]
    fn null_arguments_are_rejected_with_a_message() {
        let code = unsafe { asklearn_kb_write(ptr::null(), ptr::null_mut()) };
        assert_eq!(code, ASKLEARN_ERR_NULL);
        let msg = unsafe { CStr::from_ptr(asklearn_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "kb is NULL");
    }

    #[test]
    fn invalid_regime_is_rejected() {
        let kb = gen_kb();
        let regime = cstr("upside-down");
        let split = cstr("train");
        let mut corpus = ptr::null_mut();
        let code = unsafe {
            asklearn_corpus_generate(kb, 1, regime.as_ptr(), split.as_ptr(), 5, 0, 0.5, 0.5, &mut corpus)
        };
        assert_eq!(code, ASKLEARN_ERR_INVALID);
        unsafe { asklearn_kb_free(kb) };
    }

    #[test]
    fn generate_train_and_evaluate_end_to_end() {
        let kb = gen_kb();
        let regime = cstr("qa");
        let (train_split, dev_split) = (cstr("train"), cstr("dev"));
        let (mut train, mut dev) = (ptr::null_mut(), ptr::null_mut());
        unsafe {
            ok(asklearn_corpus_generate(kb, 1, regime.as_ptr(), train_split.as_ptr(), 60, 0, 0.5, 0.5, &mut train));
            ok(asklearn_corpus_generate(kb, 1, regime.as_ptr(), dev_split.as_ptr(), 30, 1, 0.5, 0.5, &mut dev));
        }
        let mut n = 0usize;
        assert_eq!(unsafe { asklearn_corpus_len(train, &mut n) }, ASKLEARN_OK);
        assert_eq!(n, 60);

        let kind = cstr("rbi");
        let mut model = ptr::null_mut();
        ok(unsafe { asklearn_train(kind.as_ptr(), train, dev, kb, 2, 0, &mut model) });
        let mut acc = -1.0;
        assert_eq!(unsafe { asklearn_accuracy(model, dev, kb, &mut acc) }, ASKLEARN_OK);
        assert!((0.0..=1.0).contains(&acc), "accuracy {acc} out of range");

        // Checkpoint round-trip preserves predictions exactly.
        let mut text = ptr::null_mut();
        assert_eq!(unsafe { asklearn_model_save(model, &mut text) }, ASKLEARN_OK);
        let mut model2 = ptr::null_mut();
        assert_eq!(unsafe { asklearn_model_load(text, &mut model2) }, ASKLEARN_OK);
        let mut acc2 = -1.0;
        assert_eq!(unsafe { asklearn_accuracy(model2, dev, kb, &mut acc2) }, ASKLEARN_OK);
        assert_eq!(acc, acc2);
        unsafe {
            asklearn_string_free(text);
            asklearn_model_free(model);
            asklearn_model_free(model2);
            asklearn_corpus_free(train);
            asklearn_corpus_free(dev);
            asklearn_kb_free(kb);
        }
    }
}
