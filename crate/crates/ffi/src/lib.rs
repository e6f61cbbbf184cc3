//! C ABI for kroma.
//!
//! Refinement states are exposed as opaque `KromaState` handles. Every
//! function returns a `KromaStatus`; on failure `kroma_last_error` returns a
//! message for the calling thread. Strings handed out by the library must be
//! released with `kroma_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use kroma::pipeline::{evaluate, run_pipeline, Alignment, MatchConfig, Phase};
use kroma::refine::{DeltaBatch, GraphDocument, RefineError, RefinementState, ReplayOracle, Resolution};

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KromaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Cycle = 4,
    UnknownItem = 5,
    NotPending = 6,
    Config = 7,
    PipelineFailed = 8,
    Panic = 9,
}

/// Opaque refinement state. Decisions recorded in the state are replayed
/// when an operation needs the oracle; unseen pairs count as dissimilar.
pub struct KromaState {
    state: RefinementState,
    oracle: ReplayOracle,
}

impl KromaState {
    fn new(state: RefinementState) -> Self {
        let oracle = ReplayOracle::new(state.to_document().decision_triples());
        KromaState { state, oracle }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl std::fmt::Display) {
    let c = CString::new(msg.to_string().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Fail(KromaStatus, String);

impl From<RefineError> for Fail {
    fn from(e: RefineError) -> Self {
        let status = match e {
            RefineError::Cycle(_) => KromaStatus::Cycle,
            RefineError::UnknownItem(_) => KromaStatus::UnknownItem,
            RefineError::NotPending(_) => KromaStatus::NotPending,
            RefineError::UnknownConcept(_) | RefineError::Document(_) => KromaStatus::InvalidInput,
        };
        Fail(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> KromaStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => KromaStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            KromaStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(KromaStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(KromaStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Fail> {
    if out.is_null() {
        return Err(Fail(KromaStatus::NullPointer, format!("{what} is null")));
    }
    *out = value;
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|_| Fail(KromaStatus::InvalidInput, "output contains a nul byte".into()))?;
    if out.is_null() {
        return Err(Fail(KromaStatus::NullPointer, "output pointer is null".into()));
    }
    *out = c.into_raw();
    Ok(())
}

unsafe fn state_ref<'a>(s: *const KromaState) -> Result<&'a KromaState, Fail> {
    s.as_ref().ok_or_else(|| Fail(KromaStatus::NullPointer, "state is null".into()))
}

unsafe fn state_mut<'a>(s: *mut KromaState) -> Result<&'a mut KromaState, Fail> {
    s.as_mut().ok_or_else(|| Fail(KromaStatus::NullPointer, "state is null".into()))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn kroma_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn kroma_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a state from a graph document (the `graph.json` artifact).
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kroma_state_from_json(json: *const c_char, out: *mut *mut KromaState) -> KromaStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        let doc = GraphDocument::from_json(text)?;
        let replay = ReplayOracle::new(doc.decision_triples());
        let state = RefinementState::from_document(&doc, &replay)?;
        write_out(out, Box::into_raw(Box::new(KromaState::new(state))), "out")
    })
}

/// # Safety
/// `s` must come from `kroma_state_from_json` or be null; it is invalid
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn kroma_state_free(s: *mut KromaState) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Serializes the state as a graph document.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kroma_state_to_json(s: *const KromaState, out: *mut *mut c_char) -> KromaStatus {
    guard(|| write_string(out, state_ref(s)?.state.to_document().to_json()))
}

/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kroma_state_version(s: *const KromaState, out: *mut u64) -> KromaStatus {
    guard(|| write_out(out, state_ref(s)?.state.version(), "out"))
}

/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kroma_state_class_count(s: *const KromaState, out: *mut usize) -> KromaStatus {
    guard(|| write_out(out, state_ref(s)?.state.class_count(), "out"))
}

/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn kroma_state_pending_count(s: *const KromaState, out: *mut usize) -> KromaStatus {
    guard(|| write_out(out, state_ref(s)?.state.queue().pending_len(), "out"))
}

/// Whether two concepts (`src:`/`tgt:` prefixed IRIs) share a class.
///
/// # Safety
/// `s` must be a live handle; `a`, `b` nul-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn kroma_state_same_class(
    s: *const KromaState,
    a: *const c_char,
    b: *const c_char,
    out: *mut bool,
) -> KromaStatus {
    guard(|| {
        let st = &state_ref(s)?.state;
        let parse = |p, what| -> Result<kroma::ontology::ConceptId, Fail> {
            let text = read_str(p, what)?;
            let id: kroma::ontology::ConceptId = text
                .parse()
                .map_err(|e| Fail(KromaStatus::InvalidInput, format!("{what}: {e}")))?;
            if !st.graph().contains(&id) {
                return Err(RefineError::UnknownConcept(text.into()).into());
            }
            Ok(id)
        };
        let (a, b) = (parse(a, "a")?, parse(b, "b")?);
        write_out(out, st.same_class(&a, &b), "out")
    })
}

/// Applies a reviewer decision to a pending queue item.
///
/// # Safety
/// `s` must be a live handle; `merged` may be null.
#[no_mangle]
pub unsafe extern "C" fn kroma_state_resolve(s: *mut KromaState, item: u64, approve: bool, merged: *mut bool) -> KromaStatus {
    guard(|| {
        let h = state_mut(s)?;
        let resolution = if approve { Resolution::Approve } else { Resolution::Reject };
        let report = h.state.resolve(item, resolution, &h.oracle)?;
        if !merged.is_null() {
            *merged = report.merged;
        }
        Ok(())
    })
}

/// Applies a JSON `{concepts, edges}` batch; the report is written to
/// `report_json` when it is not null.
///
/// # Safety
/// `s` must be a live handle; `batch_json` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn kroma_state_apply_delta(
    s: *mut KromaState,
    batch_json: *const c_char,
    report_json: *mut *mut c_char,
) -> KromaStatus {
    guard(|| {
        let h = state_mut(s)?;
        let batch: DeltaBatch = serde_json::from_str(read_str(batch_json, "batch_json")?)
            .map_err(|e| Fail(KromaStatus::InvalidInput, format!("batch: {e}")))?;
        let report = h.state.apply_delta(&batch, &h.oracle)?;
        if !report_json.is_null() {
            write_string(report_json, serde_json::to_string(&report).expect("serializable"))?;
        }
        Ok(())
    })
}

/// Runs the pipeline from a TOML configuration and returns the metrics
/// as JSON.
///
/// # Safety
/// `config_toml` nul-terminated; `metrics_json` writable.
#[no_mangle]
pub unsafe extern "C" fn kroma_run_pipeline(config_toml: *const c_char, metrics_json: *mut *mut c_char) -> KromaStatus {
    guard(|| {
        let cfg = MatchConfig::from_toml(read_str(config_toml, "config_toml")?)
            .map_err(|e| Fail(KromaStatus::Config, e.to_string()))?;
        let out = run_pipeline(&cfg).map_err(|e| {
            let status = if e.phase == Phase::Config {
                KromaStatus::Config
            } else {
                KromaStatus::PipelineFailed
            };
            Fail(status, format!("{} phase failed: {}", e.phase, e.message))
        })?;
        write_string(metrics_json, serde_json::to_string(&out.metrics).expect("serializable"))
    })
}

/// Precision, recall and F1 of two TSV alignments.
///
/// # Safety
/// Both strings nul-terminated; the three outputs writable.
#[no_mangle]
pub unsafe extern "C" fn kroma_evaluate(
    predicted_tsv: *const c_char,
    gold_tsv: *const c_char,
    precision: *mut f64,
    recall: *mut f64,
    f1: *mut f64,
) -> KromaStatus {
    guard(|| {
        let load = |p, what| -> Result<Alignment, Fail> {
            Alignment::from_tsv(read_str(p, what)?).map_err(|e| Fail(KromaStatus::InvalidInput, format!("{what}: {e}")))
        };
        let scores = evaluate(&load(predicted_tsv, "predicted_tsv")?, &load(gold_tsv, "gold_tsv")?);
        write_out(precision, scores.precision, "precision")?;
        write_out(recall, scores.recall, "recall")?;
        write_out(f1, scores.f1, "f1")
    })
}
