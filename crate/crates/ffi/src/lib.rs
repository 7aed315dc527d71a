//! C ABI over the rstparse library.
//!
//! Every fallible function returns an [`RstStatus`]. On failure the message is
//! available from [`rstparse_last_error`] on the same thread. Strings returned
//! through out-parameters are owned by the caller and released with
//! [`rstparse_string_free`]; parser handles are released with
//! [`rstparse_parser_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rstparse::evaluation::{evaluate_corpora, EvalOptions, MacroMode};
use rstparse::model::Parser;
use rstparse::oracle::tree_to_trace;
use rstparse::treebank::Record;
use rstparse::Error;

/// Result codes shared by every entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RstStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidInput = 3,
    Io = 4,
    Checkpoint = 5,
    Model = 6,
    Evaluation = 7,
    Panic = 8,
}

/// Opaque parser handle.
pub struct RstParser {
    inner: Parser,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: impl Into<String>) {
    let mut bytes = message.into().into_bytes();
    bytes.retain(|&b| b != 0);
    let c = CString::new(bytes).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(err: &Error) -> RstStatus {
    match err {
        Error::Io { .. } => RstStatus::Io,
        Error::Checkpoint(_) => RstStatus::Checkpoint,
        Error::Shape(_) | Error::Contract(_) | Error::Numerical(_) => RstStatus::Model,
        Error::Eval(_) => RstStatus::Evaluation,
        _ => RstStatus::InvalidInput,
    }
}

/// Runs `f`, recording failures and converting panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (RstStatus, String)>) -> RstStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RstStatus::Ok,
        Ok(Err((status, message))) => {
            set_last_error(message);
            status
        }
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(format!("internal panic: {message}"));
            RstStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (RstStatus, String) {
    (status_of(&e), e.to_string())
}

/// # Safety
/// `ptr` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, (RstStatus, String)> {
    if ptr.is_null() {
        return Err((RstStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| (RstStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

/// # Safety
/// `out` must be null or valid for a pointer write.
unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), (RstStatus, String)> {
    if out.is_null() {
        return Err((RstStatus::NullPointer, "output pointer is null".into()));
    }
    let c = CString::new(s).map_err(|_| (RstStatus::InvalidInput, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn parse_jsonl(text: &str, what: &str) -> Result<Vec<Record>, (RstStatus, String)> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            Record::from_json_line(l)
                .map_err(|e| (status_of(&e), format!("{what} line {}: {e}", n + 1)))
        })
        .collect()
}

/// Loads a checkpoint file. On success `*out` receives a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rstparse_parser_load(path: *const c_char, out: *mut *mut RstParser) -> RstStatus {
    guard(|| {
        let path = read_str(path, "path")?;
        if out.is_null() {
            return Err((RstStatus::NullPointer, "output pointer is null".into()));
        }
        let inner = Parser::load(Path::new(path)).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(RstParser { inner }));
        Ok(())
    })
}

/// Parses one corpus record (a JSON object with `doc_id`, `lang`, `edus`).
/// `*out` receives the record serialized with its predicted tree.
///
/// # Safety
/// `parser` must come from [`rstparse_parser_load`]; `record_json` must be a
/// NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rstparse_parser_parse(
    parser: *const RstParser,
    record_json: *const c_char,
    out: *mut *mut c_char,
) -> RstStatus {
    guard(|| {
        if parser.is_null() {
            return Err((RstStatus::NullPointer, "parser is null".into()));
        }
        let text = read_str(record_json, "record")?;
        let mut record = Record::from_json_line(text).map_err(lib_err)?;
        if record.doc.edu_count() == 0 {
            return Err((RstStatus::InvalidInput, "document has no EDUs".into()));
        }
        let tree = (*parser).inner.parse(&record.doc).map_err(lib_err)?;
        record.tree = Some(tree);
        write_string(out, record.to_json_line())
    })
}

/// Releases a parser handle. Null is ignored.
///
/// # Safety
/// `parser` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rstparse_parser_free(parser: *mut RstParser) {
    if !parser.is_null() {
        drop(Box::from_raw(parser));
    }
}

/// Scores predicted trees against gold trees. Both inputs are JSONL corpora
/// matched by `doc_id`. `macro_by_class` selects class-averaged macro F1
/// instead of document-averaged. `*out` receives the report as JSON.
///
/// # Safety
/// `gold_jsonl` and `pred_jsonl` must be NUL-terminated strings; `out` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn rstparse_evaluate(
    gold_jsonl: *const c_char,
    pred_jsonl: *const c_char,
    include_root: bool,
    macro_by_class: bool,
    out: *mut *mut c_char,
) -> RstStatus {
    guard(|| {
        let gold = parse_jsonl(read_str(gold_jsonl, "gold")?, "gold")?;
        let pred = parse_jsonl(read_str(pred_jsonl, "pred")?, "pred")?;
        let opts = EvalOptions {
            include_root,
            macro_mode: if macro_by_class {
                MacroMode::Class
            } else {
                MacroMode::Document
            },
        };
        let report = evaluate_corpora(&gold, &pred, &opts).map_err(lib_err)?;
        let json = serde_json::to_string(&report).map_err(|e| (RstStatus::InvalidInput, e.to_string()))?;
        write_string(out, json)
    })
}

/// Converts the tree of an annotated record into its top-down split
/// sequence, one `i j k LABEL` line per step.
///
/// # Safety
/// `record_json` must be a NUL-terminated string; `out` must be valid for
/// writes.
#[no_mangle]
pub unsafe extern "C" fn rstparse_tree_to_trace(record_json: *const c_char, out: *mut *mut c_char) -> RstStatus {
    guard(|| {
        let text = read_str(record_json, "record")?;
        let record = Record::from_json_line(text).map_err(lib_err)?;
        let tree = record.gold().map_err(lib_err)?;
        let trace = tree_to_trace(tree, &record.doc.doc_id).map_err(lib_err)?;
        write_string(out, trace.to_string())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string returned through an `out` parameter here.
#[no_mangle]
pub unsafe extern "C" fn rstparse_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message of the most recent failure on this thread, or null. Valid until
/// the next call into the library on the same thread.
#[no_mangle]
pub extern "C" fn rstparse_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rstparse_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
