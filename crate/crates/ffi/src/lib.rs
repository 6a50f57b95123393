//! C interface to the decision engine.
//!
//! Documents and sessions are opaque handles owned by the caller and released
//! with their `_free` functions. Every fallible call returns an
//! [`SdpStatus`]; on failure [`sdp_last_error`] describes the problem. Strings
//! handed out by the library are NUL-terminated UTF-8 and must be released
//! with [`sdp_string_free`].

use std::cell::RefCell;
use std::collections::BTreeSet;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::time::{SystemTime, UNIX_EPOCH};

use sdp::aggregate::AggregationMode;
use sdp::agent::run_episode;
use sdp::kb::TheoryId;
use sdp::lang::{parse, parse_proposition, Document};
use sdp::session::{goal_report, parse_ground, Finding, Session, SessionError};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Ok = 0,
    /// A required pointer argument was NULL.
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// Document or proposition syntax error.
    Parse = 3,
    /// Unknown session, decision or theory.
    NotFound = 4,
    /// Well-formed input the engine cannot accept.
    Invalid = 5,
    /// Commit refused: not confirmed, tied, no candidates or not open.
    Refused = 6,
    Engine = 7,
    /// A Rust panic was caught at the boundary.
    Panic = 8,
}

/// A parsed document: knowledge base, decision classes and scenario.
pub struct SdpDocument {
    doc: Document,
}

/// One consultation over a document, with its own findings.
pub struct SdpSession {
    session: Session,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Fail = (SdpStatus, String);

fn set_error(message: Option<String>) {
    let c = message.map(|m| CString::new(m.replace('\0', " ")).expect("NULs removed"));
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SdpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(None);
            SdpStatus::Ok
        }
        Ok(Err((status, message))) => {
            set_error(Some(message));
            status
        }
        Err(_) => {
            set_error(Some("internal panic".into()));
            SdpStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err((SdpStatus::NullArgument, format!("{what} is NULL")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (SdpStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| (SdpStatus::NullArgument, format!("{what} is NULL")))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| (SdpStatus::NullArgument, format!("{what} is NULL")))
}

unsafe fn out_ptr<'a, T>(p: *mut *mut T) -> Result<&'a mut *mut T, Fail> {
    p.as_mut().ok_or_else(|| (SdpStatus::NullArgument, "output pointer is NULL".into()))
}

fn give(s: String) -> *mut c_char {
    CString::new(s).map(CString::into_raw).unwrap_or(ptr::null_mut())
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("views serialize")
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn session_fail(e: SessionError) -> Fail {
    let status = match e {
        SessionError::UnknownSession(_) | SessionError::UnknownDecision(_) => SdpStatus::NotFound,
        SessionError::Malformed(_) => SdpStatus::Parse,
        SessionError::InvalidFinding(_) => SdpStatus::Invalid,
        SessionError::NotConfirmed | SessionError::Tie(_) | SessionError::NoCandidates | SessionError::NotOpen { .. } => {
            SdpStatus::Refused
        }
        SessionError::Engine(_) => SdpStatus::Engine,
    };
    (status, e.to_string())
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn sdp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn sdp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Parses a document. On success `*out` owns a new handle.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sdp_document_parse(text_ptr: *const c_char, out: *mut *mut SdpDocument) -> SdpStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let source = text(text_ptr, "text")?;
        let doc = parse(source).map_err(|errors| {
            let lines: Vec<String> = errors.iter().map(|e| format!("{}:{}: {}", e.line, e.col, e.message)).collect();
            (SdpStatus::Parse, lines.join("\n"))
        })?;
        *out = Box::into_raw(Box::new(SdpDocument { doc }));
        Ok(())
    })
}

/// # Safety
/// `doc` must come from [`sdp_document_parse`] and not be used afterwards.
/// NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sdp_document_free(doc: *mut SdpDocument) {
    if !doc.is_null() {
        drop(Box::from_raw(doc));
    }
}

/// Arguments and status for a goal as JSON. `theories` is a comma-separated
/// list of theory ids, or NULL for every theory.
///
/// # Safety
/// Pointers must be valid; `theories` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn sdp_argue_json(
    doc: *const SdpDocument,
    goal: *const c_char,
    theories: *const c_char,
    out: *mut *mut c_char,
) -> SdpStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let doc = &handle(doc, "document")?.doc;
        let goal = parse_proposition(text(goal, "goal")?).map_err(|e| (SdpStatus::Parse, e.to_string()))?;
        let active: BTreeSet<TheoryId> = if theories.is_null() {
            doc.kb.theory_ids()
        } else {
            text(theories, "theories")?
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(TheoryId::new)
                .collect()
        };
        if let Some(missing) = active.iter().find(|t| !doc.kb.has_theory(t)) {
            return Err((SdpStatus::NotFound, format!("unknown theory `{}`", missing.as_str())));
        }
        let report = goal_report(&doc.kb, &goal, &active, AggregationMode::default()).map_err(session_fail)?;
        *out = give(json(&report));
        Ok(())
    })
}

/// Starts a session over a copy of the document.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdp_session_new(
    doc: *const SdpDocument,
    id: *const c_char,
    out: *mut *mut SdpSession,
) -> SdpStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let doc = &handle(doc, "document")?.doc;
        let id = text(id, "session id")?;
        let session = Session::new(id, doc.kb.clone(), doc.classes.clone(), now()).map_err(session_fail)?;
        *out = Box::into_raw(Box::new(SdpSession { session }));
        Ok(())
    })
}

/// Reports a ground finding as present or, for askable propositions, absent.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdp_session_add_finding(
    session: *mut SdpSession,
    proposition: *const c_char,
    present: bool,
) -> SdpStatus {
    guard(|| {
        let s = &mut handle_mut(session, "session")?.session;
        let p = parse_ground(text(proposition, "proposition")?).map_err(session_fail)?;
        let finding = if present { Finding::present(p) } else { Finding::absent(p) };
        s.add_finding(finding, now()).map_err(session_fail)
    })
}

/// The session summary as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdp_session_view_json(session: *const SdpSession, out: *mut *mut c_char) -> SdpStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        *out = give(json(&handle(session, "session")?.session.view()));
        Ok(())
    })
}

/// Candidates, ranking and tie flag of one decision as JSON.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdp_session_options_json(
    session: *const SdpSession,
    decision: *const c_char,
    out: *mut *mut c_char,
) -> SdpStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let s = &handle(session, "session")?.session;
        let view = s.options(text(decision, "decision")?).map_err(session_fail)?;
        *out = give(json(&view));
        Ok(())
    })
}

/// The next question for a decision. `*out` is NULL when there is none.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdp_session_next_question(
    session: *const SdpSession,
    decision: *const c_char,
    out: *mut *mut c_char,
) -> SdpStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let s = &handle(session, "session")?.session;
        let q = s.next_question(text(decision, "decision")?).map_err(session_fail)?;
        if let Some(q) = q.question {
            *out = give(q);
        }
        Ok(())
    })
}

/// Commits a decision. On success `*out` holds the chosen option; a refusal
/// returns [`SdpStatus::Refused`] with the reason in [`sdp_last_error`].
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdp_session_commit(
    session: *mut SdpSession,
    decision: *const c_char,
    out: *mut *mut c_char,
) -> SdpStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let s = &mut handle_mut(session, "session")?.session;
        let c = s.commit(text(decision, "decision")?, now()).map_err(session_fail)?;
        *out = give(c.option);
        Ok(())
    })
}

/// # Safety
/// `session` must come from [`sdp_session_new`] and not be used afterwards.
/// NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn sdp_session_free(session: *mut SdpSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// Runs the document's scenario and returns the trace as JSON lines.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn sdp_run_episode_json(
    doc: *const SdpDocument,
    max_steps: u64,
    out: *mut *mut c_char,
) -> SdpStatus {
    guard(|| {
        let out = out_ptr(out)?;
        *out = ptr::null_mut();
        let doc = &handle(doc, "document")?.doc;
        let scenario = doc
            .scenario
            .as_ref()
            .ok_or((SdpStatus::Invalid, "the document has no scenario".to_string()))?;
        *out = give(run_episode(&doc.kb, &doc.classes, scenario, max_steps).to_jsonl());
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn sdp_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
