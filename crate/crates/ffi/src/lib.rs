//! C ABI over topocam sessions.
//!
//! Every function returns a [`TopocamStatus`]. On failure the message is
//! available from [`topocam_last_error`] on the same thread. Strings handed
//! out are NUL-terminated UTF-8 and must be released with
//! [`topocam_string_free`]; sessions with [`topocam_session_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use thiserror::Error;

use topocam::export::{final_graph_json, ColoredMesh};
use topocam::macro_id::{Advance, DecisionError, DecisionInput, IdentifyError, Stage};
use topocam::mesh::Vector;
use topocam::segmentation::MachiningSetup;
use topocam::session::{Session, SessionConfig, SessionError, SessionStore};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopocamStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidMesh = 3,
    InvalidSetup = 4,
    InvalidJson = 5,
    InvalidDecision = 6,
    UnknownQuery = 7,
    NotFinalized = 8,
    IdentificationFailed = 9,
    NotFound = 10,
    Io = 11,
    Panic = 12,
}

/// Opaque identification session.
pub struct TopocamSession {
    inner: Session,
}

#[derive(Debug, Error)]
enum FfiError {
    #[error("null argument: {0}")]
    Null(&'static str),
    #[error("{0} is not valid UTF-8")]
    Utf8(&'static str),
    #[error(transparent)]
    Setup(#[from] topocam::segmentation::SetupError),
    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Session(#[from] SessionError),
    #[error("panic: {0}")]
    Panic(String),
}

impl From<IdentifyError> for FfiError {
    fn from(e: IdentifyError) -> Self {
        FfiError::Session(SessionError::Identify(e))
    }
}

impl FfiError {
    fn status(&self) -> TopocamStatus {
        match self {
            FfiError::Null(_) => TopocamStatus::NullArgument,
            FfiError::Utf8(_) => TopocamStatus::InvalidUtf8,
            FfiError::Setup(_) => TopocamStatus::InvalidSetup,
            FfiError::Json(_) => TopocamStatus::InvalidJson,
            FfiError::Panic(_) => TopocamStatus::Panic,
            FfiError::Session(e) => match e {
                SessionError::Mesh(_) => TopocamStatus::InvalidMesh,
                SessionError::Identify(IdentifyError::Decision(DecisionError::UnknownQuery(_))) => TopocamStatus::UnknownQuery,
                SessionError::Identify(IdentifyError::Decision(_) | IdentifyError::UnknownMacro(_)) => TopocamStatus::InvalidDecision,
                SessionError::Identify(IdentifyError::NotFinalized) => TopocamStatus::NotFinalized,
                SessionError::Identify(_) => TopocamStatus::IdentificationFailed,
                SessionError::NotFound(_) | SessionError::BadId(_) => TopocamStatus::NotFound,
                SessionError::Io { .. } | SessionError::Json { .. } | SessionError::SchemaVersion { .. } => TopocamStatus::Io,
            },
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let text = CString::new(msg.replace('\0', " ")).expect("NUL bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

fn guard(f: impl FnOnce() -> Result<(), FfiError>) -> TopocamStatus {
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<&str>().map(|s| s.to_string()).or_else(|| p.downcast_ref::<String>().cloned()).unwrap_or_default();
        Err(FfiError::Panic(msg))
    });
    match outcome {
        Ok(()) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            TopocamStatus::Ok
        }
        Err(e) => {
            set_last_error(&e.to_string());
            e.status()
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &'static str) -> Result<&'a str, FfiError> {
    if p.is_null() {
        return Err(FfiError::Null(name));
    }
    CStr::from_ptr(p).to_str().map_err(|_| FfiError::Utf8(name))
}

unsafe fn session_ref<'a>(s: *const TopocamSession) -> Result<&'a TopocamSession, FfiError> {
    s.as_ref().ok_or(FfiError::Null("session"))
}

unsafe fn session_mut<'a>(s: *mut TopocamSession) -> Result<&'a mut TopocamSession, FfiError> {
    s.as_mut().ok_or(FfiError::Null("session"))
}

unsafe fn put_string(out: *mut *mut c_char, text: String) -> Result<(), FfiError> {
    if out.is_null() {
        return Err(FfiError::Null("out"));
    }
    let c = CString::new(text).map_err(|_| FfiError::Panic("string with NUL byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

unsafe fn put_session(out: *mut *mut TopocamSession, inner: Session) -> Result<(), FfiError> {
    if out.is_null() {
        return Err(FfiError::Null("out"));
    }
    *out = Box::into_raw(Box::new(TopocamSession { inner }));
    Ok(())
}

/// Message of the last failed call on this thread, or NULL. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn topocam_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn topocam_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Opens a session from STL bytes (binary or ASCII) with the default setup:
/// tool axis +Z, bottoms up to 30 degrees, flanks from 60 degrees.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `id` must be a NUL-terminated
/// string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn topocam_session_from_stl(
    id: *const c_char,
    bytes: *const u8,
    len: usize,
    out: *mut *mut TopocamSession,
) -> TopocamStatus {
    topocam_session_from_stl_with_setup(id, bytes, len, 0.0, 0.0, 1.0, 30.0, 60.0, out)
}

/// Like [`topocam_session_from_stl`] with an explicit tool axis and angle
/// thresholds in degrees.
///
/// # Safety
/// Same as [`topocam_session_from_stl`].
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn topocam_session_from_stl_with_setup(
    id: *const c_char,
    bytes: *const u8,
    len: usize,
    axis_x: f64,
    axis_y: f64,
    axis_z: f64,
    theta_bottom: f64,
    theta_flank: f64,
    out: *mut *mut TopocamSession,
) -> TopocamStatus {
    guard(|| {
        let id = str_arg(id, "id")?;
        if bytes.is_null() {
            return Err(FfiError::Null("bytes"));
        }
        let data = std::slice::from_raw_parts(bytes, len);
        let setup = MachiningSetup::new(Vector::new(axis_x, axis_y, axis_z), theta_bottom, theta_flank)?;
        let config = SessionConfig { setup, ..SessionConfig::default() };
        put_session(out, Session::from_stl(id, data, config)?)
    })
}

/// Runs identification until the next query or the end. `pending` receives
/// the number of open queries, 0 once the graph is final.
///
/// # Safety
/// `session` must come from this library; `pending` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn topocam_session_advance(session: *mut TopocamSession, pending: *mut usize) -> TopocamStatus {
    guard(|| {
        let s = session_mut(session)?;
        let n = match s.inner.advance()? {
            Advance::Finalized => 0,
            Advance::AwaitingDecision(q) => q.len(),
        };
        if !pending.is_null() {
            *pending = n;
        }
        Ok(())
    })
}

/// Applies a decomposition decision or a relation override given as JSON.
/// A rejected decision leaves the session unchanged.
///
/// # Safety
/// `session` must come from this library; `json` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn topocam_session_decide(session: *mut TopocamSession, json: *const c_char) -> TopocamStatus {
    guard(|| {
        let s = session_mut(session)?;
        let input: DecisionInput = serde_json::from_str(str_arg(json, "json")?)?;
        s.inner.decide(input)?;
        Ok(())
    })
}

/// Session summary: phase, feature counts, macros, pending queries.
///
/// # Safety
/// `session` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn topocam_session_state_json(session: *const TopocamSession, out: *mut *mut c_char) -> TopocamStatus {
    guard(|| put_string(out, serde_json::to_string(&session_ref(session)?.inner.state())?))
}

/// Full working graph: features, arcs, hidden arcs, macros, relations, queries.
///
/// # Safety
/// `session` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn topocam_session_graph_json(session: *const TopocamSession, out: *mut *mut c_char) -> TopocamStatus {
    guard(|| put_string(out, serde_json::to_string(&session_ref(session)?.inner.graph)?))
}

/// Final macro graph, byte for byte as the CLI writes it. Fails with
/// `NotFinalized` while identification is open.
///
/// # Safety
/// `session` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn topocam_session_final_graph_json(session: *const TopocamSession, out: *mut *mut c_char) -> TopocamStatus {
    guard(|| {
        let s = session_ref(session)?;
        if s.inner.graph.stage != Stage::Finalized {
            return Err(IdentifyError::NotFinalized.into());
        }
        put_string(out, final_graph_json(&s.inner.graph))
    })
}

/// Indexed mesh with per-face feature and macro labels and colors.
///
/// # Safety
/// `session` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn topocam_session_mesh_json(session: *const TopocamSession, out: *mut *mut c_char) -> TopocamStatus {
    guard(|| {
        let s = session_ref(session)?;
        put_string(out, serde_json::to_string(&ColoredMesh::new(&s.inner.identifier.mesh.mesh, &s.inner.graph))?)
    })
}

/// Writes the session to `<dir>/<id>.json`.
///
/// # Safety
/// `session` must come from this library; `dir` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn topocam_session_save(session: *const TopocamSession, dir: *const c_char) -> TopocamStatus {
    guard(|| {
        let s = session_ref(session)?;
        SessionStore::new(str_arg(dir, "dir")?).save(&s.inner)?;
        Ok(())
    })
}

/// Reopens a session saved by [`topocam_session_save`], the CLI or the
/// HTTP server.
///
/// # Safety
/// `dir` and `id` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn topocam_session_load(dir: *const c_char, id: *const c_char, out: *mut *mut TopocamSession) -> TopocamStatus {
    guard(|| {
        let store = SessionStore::new(str_arg(dir, "dir")?);
        put_session(out, store.load(str_arg(id, "id")?)?)
    })
}

/// # Safety
/// `session` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn topocam_session_free(session: *mut TopocamSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}

/// # Safety
/// `s` must be a string returned by this library and not be used
/// afterwards. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn topocam_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
