//! C interface to the trace engines.
//!
//! Every call returns a [`NonamalgStatus`]. Traces are opaque handles owned
//! by the caller and released with [`nonamalg_trace_free`]; strings handed
//! out are released with [`nonamalg_string_free`]. After a failed call,
//! [`nonamalg_last_error`] describes what went wrong on the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nonamalg::cohen::SecretStream;
use nonamalg::instances::Preset;
use nonamalg::trace::{self, EngineId, Run, RunParams, Suite, TraceDocument};
use nonamalg::Error;

/// Result of every exported call. The values match the command line's exit
/// codes where both have one.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NonamalgStatus {
    Ok = 0,
    NullArgument = 1,
    Usage = 2,
    Malformed = 3,
    VerifyFailed = 4,
    Aborted = 5,
    Panicked = 6,
}

/// A finished engine run.
pub struct NonamalgTrace {
    run: Run,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> NonamalgStatus {
    match nonamalg::cli::exit_code(e) {
        nonamalg::cli::EXIT_MALFORMED => NonamalgStatus::Malformed,
        _ => NonamalgStatus::Aborted,
    }
}

type Call = Result<(), (NonamalgStatus, String)>;

fn fail(e: Error) -> (NonamalgStatus, String) {
    (status_of(&e), e.to_string())
}

fn guarded(f: impl FnOnce() -> Call) -> NonamalgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NonamalgStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            NonamalgStatus::Panicked
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, (NonamalgStatus, String)> {
    if p.is_null() {
        return Err((NonamalgStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (NonamalgStatus::Malformed, format!("{what} is not UTF-8")))
}

fn hand_out(s: String) -> Result<*mut c_char, (NonamalgStatus, String)> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| (NonamalgStatus::Malformed, "output contains a NUL byte".into()))
}

fn check_out<T>(p: *mut T, what: &str) -> Call {
    if p.is_null() {
        Err((NonamalgStatus::NullArgument, format!("{what} is null")))
    } else {
        Ok(())
    }
}

/// Runs `engine` (`pair`, `obstacle`, `wide`, `oscillation`, `anchored` or
/// `anchored-filters`) on its shipped configuration. `z` takes the same
/// forms as on the command line; null means `seed:0`.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nonamalg_construct(
    engine: *const c_char,
    steps: usize,
    z: *const c_char,
    seed: u64,
    out: *mut *mut NonamalgTrace,
) -> NonamalgStatus {
    guarded(|| {
        check_out(out, "out")?;
        let engine: EngineId = text(engine, "engine")?
            .parse()
            .map_err(|e: Error| (NonamalgStatus::Usage, e.to_string()))?;
        let z = if z.is_null() { "seed:0" } else { text(z, "z")? };
        let preset = Preset {
            steps,
            z: SecretStream::parse(z).map_err(fail)?.source,
            seed,
            gap: None,
            obstacles: None,
        };
        let run = RunParams::preset(engine, &preset)
            .and_then(|p| p.construct())
            .map_err(fail)?;
        *out = Box::into_raw(Box::new(NonamalgTrace { run }));
        Ok(())
    })
}

/// Reads a trace from its JSON text.
///
/// # Safety
/// `json` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nonamalg_trace_parse(json: *const c_char, out: *mut *mut NonamalgTrace) -> NonamalgStatus {
    guarded(|| {
        check_out(out, "out")?;
        let run = TraceDocument::parse(text(json, "json")?)
            .and_then(|d| d.run())
            .map_err(fail)?;
        *out = Box::into_raw(Box::new(NonamalgTrace { run }));
        Ok(())
    })
}

/// Canonical JSON text of a trace, to be released with
/// [`nonamalg_string_free`].
///
/// # Safety
/// `trace` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nonamalg_trace_to_json(trace: *const NonamalgTrace, out: *mut *mut c_char) -> NonamalgStatus {
    guarded(|| {
        check_out(out, "out")?;
        let t = trace.as_ref().ok_or((NonamalgStatus::NullArgument, "trace is null".to_string()))?;
        let s = t.run.document().and_then(|d| d.to_text()).map_err(fail)?;
        *out = hand_out(s)?;
        Ok(())
    })
}

/// Runs every verification suite. Returns `VerifyFailed` when any suite
/// reports a problem; the problems are then in [`nonamalg_last_error`].
///
/// # Safety
/// `trace` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn nonamalg_trace_verify(trace: *const NonamalgTrace) -> NonamalgStatus {
    guarded(|| {
        let t = trace.as_ref().ok_or((NonamalgStatus::NullArgument, "trace is null".to_string()))?;
        let report = trace::verify(&t.run, &Suite::ALL);
        if report.passed() {
            return Ok(());
        }
        let lines: Vec<String> = report
            .failures
            .iter()
            .flat_map(|(s, fs)| fs.iter().map(move |f| format!("{s:?}: {f}")))
            .collect();
        Err((NonamalgStatus::VerifyFailed, lines.join("\n")))
    })
}

/// Decodes the bits carried by the trace as a string of `0`/`1`, released
/// with [`nonamalg_string_free`]. `obstacle` is a coordinate list such as
/// `"0,1"`; engines without obstacles accept null, the others default to
/// their first obstacle. Returns `VerifyFailed` (with the bits still
/// written) when they disagree with the stream.
///
/// # Safety
/// `trace` must come from this library; `obstacle` must be null or
/// NUL-terminated; `out_bits` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nonamalg_trace_decode(
    trace: *const NonamalgTrace,
    obstacle: *const c_char,
    out_bits: *mut *mut c_char,
) -> NonamalgStatus {
    guarded(|| {
        check_out(out_bits, "out_bits")?;
        let t = trace.as_ref().ok_or((NonamalgStatus::NullArgument, "trace is null".to_string()))?;
        let b = if obstacle.is_null() {
            trace::obstacles(&t.run).into_iter().next()
        } else {
            Some(trace::parse_coords(text(obstacle, "obstacle")?).map_err(fail)?)
        };
        let d = trace::decode(&t.run, b.as_ref()).map_err(fail)?;
        *out_bits = hand_out(trace::bits_string(&d.bits))?;
        if d.matches() {
            Ok(())
        } else {
            Err((
                NonamalgStatus::VerifyFailed,
                format!("expected {}", trace::bits_string(&d.expected)),
            ))
        }
    })
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn nonamalg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// # Safety
/// `trace` must be null or come from this library, and is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn nonamalg_trace_free(trace: *mut NonamalgTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

/// # Safety
/// `s` must be null or a string handed out by this library.
#[no_mangle]
pub unsafe extern "C" fn nonamalg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Trace format version this library reads and writes.
#[no_mangle]
pub extern "C" fn nonamalg_format_version() -> u32 {
    trace::FORMAT_VERSION
}
